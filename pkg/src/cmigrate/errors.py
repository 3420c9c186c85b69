"""Exception hierarchy shared across the pipeline."""


class PipelineError(Exception):
    """Base class for every error raised by cmigrate."""


class EmptyRepository(PipelineError):
    pass


class DuplicateDefinition(PipelineError):
    pass


class ToolchainMissing(PipelineError):
    pass


class PathOccupied(PipelineError):
    pass


class BuildFailed(PipelineError):
    """Tests could not run because the crate does not build."""

    def __init__(self, message, raw_output=""):
        super().__init__(message)
        self.raw_output = raw_output


class CycleDetected(PipelineError):
    pass


class ScriptExhausted(PipelineError):
    """A mock agent received a request that no scripted step matches."""


class ScriptError(PipelineError):
    pass


class IsolationViolation(PipelineError):
    pass


class AgentBackendError(PipelineError):
    pass


class StageExhausted(PipelineError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class HashMismatch(PipelineError):
    pass


class AbortedByBudget(PipelineError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ValidationError(PipelineError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
