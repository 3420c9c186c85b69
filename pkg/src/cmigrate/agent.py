"""Timeout-bounded access to an external coding agent.

Two backends share one interface: :class:`SubprocessBackend` drives a real
agent CLI given as an argv template, and :class:`MockBackend` replays a
JSON script of file edits for tests.  Neither reports whether the task
succeeded; callers verify the workspace themselves.
"""

from __future__ import annotations

import json
import logging
import os
import signal
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from string import Template
from typing import Any

from .errors import IsolationViolation, ScriptError, ScriptExhausted

log = logging.getLogger(__name__)

ROLES = ("scaffold", "map", "translate", "compile_repair", "refactor", "verify")

COMPLETED = "completed"
TIMED_OUT = "timed_out"
BACKEND_ERROR = "backend_error"

# extra wait after terminate before returning timed_out
GRACE_SECS = 5.0


@dataclass
class AgentRequest:
    role: str
    prompt: str
    workspace_paths: list[str]
    timeout: float
    attempt_index: int = 0

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown agent role {self.role!r}")
        if not self.prompt:
            raise ValueError("empty prompt")
        if not self.timeout > 0:
            raise ValueError("timeout must be positive")
        for p in self.workspace_paths:
            if not Path(p).exists():
                raise ValueError(f"workspace path {p} does not exist")

    @property
    def target(self) -> Path:
        return Path(self.workspace_paths[-1])


@dataclass
class AgentResult:
    status: str
    transcript: str = ""
    structured_payload: Any = None
    wall_time: float = 0.0


def extract_last_json(transcript: str):
    """Last top-level JSON object embedded in free text, or None."""
    decoder = json.JSONDecoder()
    last = None
    i = transcript.find("{")
    while i >= 0:
        try:
            obj, end = decoder.raw_decode(transcript, i)
        except json.JSONDecodeError:
            i = transcript.find("{", i + 1)
            continue
        if isinstance(obj, dict):
            last = obj
        i = transcript.find("{", end)
    return last


class AgentBackend:
    """Base class; subclasses implement :meth:`_invoke`."""

    def __init__(self):
        self.calls: list[tuple[str, str]] = []

    def invoke(self, request: AgentRequest) -> AgentResult:
        self.calls.append((request.role, request.prompt))
        result = self._invoke(request)
        if request.role == "map" and result.status == COMPLETED:
            result.structured_payload = extract_last_json(result.transcript)
        else:
            result.structured_payload = None
        log.debug("agent %s attempt %d -> %s", request.role, request.attempt_index, result.status)
        return result

    def _invoke(self, request: AgentRequest) -> AgentResult:
        raise NotImplementedError

    def count(self, role: str | None = None) -> int:
        return sum(1 for r, _ in self.calls if role is None or r == role)


class SubprocessBackend(AgentBackend):
    """Run an agent CLI.  ``command`` may use the placeholders
    ``{PROMPT_FILE}``, ``{WORKSPACE}``, ``{C_ROOT}`` and ``{ROLE}``; the
    prompt is also written to the process's stdin.
    """

    def __init__(self, command: list[str], grace: float = GRACE_SECS, env: dict | None = None):
        super().__init__()
        if not command:
            raise ValueError("agent.command is empty")
        self.command = list(command)
        self.grace = grace
        self.env = env

    def _argv(self, request: AgentRequest, prompt_file: str) -> list[str]:
        subs = {
            "{PROMPT_FILE}": prompt_file,
            "{WORKSPACE}": str(request.target),
            "{C_ROOT}": str(request.workspace_paths[0]),
            "{ROLE}": request.role,
        }
        argv = []
        for arg in self.command:
            for k, v in subs.items():
                arg = arg.replace(k, v)
            argv.append(arg)
        return argv

    def _invoke(self, request: AgentRequest) -> AgentResult:
        start = time.monotonic()
        with tempfile.TemporaryDirectory(prefix="cmigrate-prompt-") as tmp:
            prompt_file = os.path.join(tmp, f"{request.role}.txt")
            Path(prompt_file).write_text(request.prompt, encoding="utf-8")
            argv = self._argv(request, prompt_file)
            try:
                proc = subprocess.Popen(
                    argv,
                    cwd=str(request.target),
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    stderr=subprocess.STDOUT,
                    text=True,
                    errors="replace",
                    env=self.env,
                    start_new_session=True,
                )
            except OSError as exc:
                return AgentResult(BACKEND_ERROR, f"failed to start agent {argv[0]!r}: {exc}",
                                   wall_time=time.monotonic() - start)
            try:
                out, _ = proc.communicate(request.prompt, timeout=request.timeout)
            except subprocess.TimeoutExpired:
                out = self._terminate(proc)
                elapsed = max(time.monotonic() - start, request.timeout)
                return AgentResult(TIMED_OUT, out or "", wall_time=elapsed)
            except BrokenPipeError:
                out, _ = proc.communicate()
            elapsed = time.monotonic() - start
        if proc.returncode != 0:
            return AgentResult(BACKEND_ERROR, out, wall_time=elapsed)
        return AgentResult(COMPLETED, out, wall_time=elapsed)

    def _terminate(self, proc: subprocess.Popen) -> str:
        for sig, wait in ((signal.SIGTERM, self.grace), (signal.SIGKILL, None)):
            try:
                os.killpg(proc.pid, sig)
            except ProcessLookupError:
                pass
            try:
                out, _ = proc.communicate(timeout=wait)
                return out
            except subprocess.TimeoutExpired:
                continue
        return ""


ACTIONS = ("write_file", "append_file", "replace_in_file", "delete_file", "emit_text", "emit_json", "sleep")


@dataclass
class ScriptStep:
    role: str
    contains: list[str]
    actions: list[dict]
    exit: int = 0
    repeat: bool = False
    consumed: bool = field(default=False, compare=False)

    def matches(self, request: AgentRequest) -> bool:
        if self.consumed and not self.repeat:
            return False
        return self.role == request.role and all(s in request.prompt for s in self.contains)


def _parse_step(raw: dict, idx: int) -> ScriptStep:
    try:
        match = raw["match"]
        role = match["role"]
        contains = match.get("prompt_contains", [])
        if isinstance(contains, str):
            contains = [contains]
        actions = raw.get("actions", [])
        for a in actions:
            if a.get("action") not in ACTIONS:
                raise ScriptError(f"step {idx}: unknown action {a.get('action')!r}")
        return ScriptStep(role, list(contains), list(actions), int(raw.get("exit", 0)), bool(raw.get("repeat", False)))
    except (KeyError, TypeError, AttributeError) as exc:
        raise ScriptError(f"step {idx}: malformed ({exc})") from exc


class MockBackend(AgentBackend):
    """Replays scripted steps; each request consumes the first unconsumed
    step whose role matches and whose substrings all occur in the prompt.

    Sleeps use a virtual clock unless ``real_sleep`` is set, so timeouts are
    testable without waiting.
    """

    def __init__(self, steps: list[ScriptStep], real_sleep: bool = False):
        super().__init__()
        self.steps = steps
        self.real_sleep = real_sleep

    @classmethod
    def from_json(cls, data, **kw) -> "MockBackend":
        if not isinstance(data, list):
            raise ScriptError("mock script must be a JSON array of steps")
        return cls([_parse_step(s, i) for i, s in enumerate(data)], **kw)

    @classmethod
    def load(cls, path, **kw) -> "MockBackend":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ScriptError(f"{path}: {exc}") from exc
        return cls.from_json(data, **kw)

    def remaining(self) -> list[ScriptStep]:
        return [s for s in self.steps if not s.consumed and not s.repeat]

    def _resolve(self, request: AgentRequest, action: dict) -> Path:
        roots = [Path(p).resolve() for p in request.workspace_paths]
        root = roots[0] if action.get("root") == "c" else roots[-1]
        path = (root / action["path"]).resolve()
        if not any(path == r or r in path.parents for r in roots):
            raise IsolationViolation(f"mock action touches {path} outside the workspaces")
        return path

    def _invoke(self, request: AgentRequest) -> AgentResult:
        step = next((s for s in self.steps if s.matches(request)), None)
        if step is None:
            first = request.prompt.strip().splitlines()[0] if request.prompt.strip() else ""
            raise ScriptExhausted(f"no scripted step for role={request.role} prompt={first[:120]!r}")
        step.consumed = True
        clock = 0.0
        transcript: list[str] = []
        for action in step.actions:
            kind = action["action"]
            if kind == "sleep":
                secs = float(action.get("seconds", 0))
                if clock + secs > request.timeout:
                    if self.real_sleep:
                        time.sleep(max(request.timeout - clock, 0))
                    return AgentResult(TIMED_OUT, "\n".join(transcript), wall_time=request.timeout)
                if self.real_sleep:
                    time.sleep(secs)
                clock += secs
            elif kind == "emit_text":
                transcript.append(str(action.get("text", "")))
            elif kind == "emit_json":
                transcript.append(json.dumps(action.get("value")))
            else:
                self._apply_file_action(request, kind, action)
        status = COMPLETED if step.exit == 0 else BACKEND_ERROR
        return AgentResult(status, "\n".join(transcript), wall_time=clock)

    def _apply_file_action(self, request, kind, action):
        path = self._resolve(request, action)
        if kind == "write_file":
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(action.get("content", ""), encoding="utf-8")
        elif kind == "append_file":
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "a", encoding="utf-8") as fh:
                fh.write(action.get("content", ""))
        elif kind == "replace_in_file":
            if not path.is_file():
                raise ScriptError(f"replace_in_file: {action['path']} does not exist")
            text = path.read_text(encoding="utf-8")
            old, new = action["old"], action["new"]
            if old not in text:
                raise ScriptError(f"replace_in_file: {action['path']} does not contain {old[:60]!r}")
            path.write_text(text.replace(old, new, int(action.get("count", 1))), encoding="utf-8")
        elif kind == "delete_file":
            if path.exists():
                path.unlink()


class PromptLibrary:
    """Role prompt templates, ``$name`` placeholders.

    Files in ``prompt_dir`` override the bundled defaults one by one.
    """

    def __init__(self, prompt_dir=None):
        self.prompt_dir = Path(prompt_dir) if prompt_dir else None

    def source(self, name: str) -> str:
        if self.prompt_dir is not None:
            candidate = self.prompt_dir / name
            if candidate.is_file():
                return candidate.read_text(encoding="utf-8")
        return resources.files("cmigrate").joinpath("prompts").joinpath(name).read_text(encoding="utf-8")

    def render(self, template: str, /, **values) -> str:
        return Template(self.source(template)).safe_substitute({k: str(v) for k, v in values.items()})

    def install_agents_md(self, workspace) -> Path:
        dest = Path(workspace) / "AGENTS.md"
        dest.write_text(self.source("AGENTS.md"), encoding="utf-8")
        return dest
