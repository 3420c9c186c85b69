"""Pipeline configuration: one YAML file, CLI overrides, then environment.

Precedence is file < CLI flags < environment.  Environment variables use the
``CMIGRATE_`` prefix and ``__`` between nesting levels, for example
``CMIGRATE_SCAFFOLD__MAX_REPAIR_ATTEMPTS=3``.  Values are parsed as YAML
scalars, so ``3``, ``true`` and ``[a, b]`` work as expected.

Example file::

    mode: full
    interfaces: null            # or a path to an expert-written crate
    scan:
      ignore_globs: ["third_party/*"]
      wrapper_macros: [TEST]
    scaffold:
      max_repair_attempts: 5
      max_refactor_attempts: 3
      stage_timeout: 900
    agent:
      command: [my-agent, --prompt-file, "{PROMPT_FILE}", --cwd, "{WORKSPACE}"]
      timeout_secs: 900
    toolchain:
      check_cmd: [cargo, check, --message-format=json]
      test_cmd: [cargo, test, --no-fail-fast]
    mapper:
      max_attempts: 3
    orchestrator:
      translate_retries: 3
      refactor_rounds: 1
      verify_retries: 3
      test_timeout_secs: 300
"""

from __future__ import annotations

import dataclasses
import os
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ValidationError
from .orchestrator import normalize_mode
from .scaffold import ScaffoldConfig
from .scanner import ScanConfig

ENV_PREFIX = "CMIGRATE_"


@dataclass
class AgentConfig:
    command: list[str] = field(default_factory=list)
    timeout_secs: float = 900.0
    prompt_dir: str | None = None
    mock_script: str | None = None


@dataclass
class ToolchainConfig:
    check_cmd: list[str] = field(default_factory=lambda: ["cargo", "check", "--message-format=json"])
    test_cmd: list[str] = field(default_factory=lambda: ["cargo", "test", "--no-fail-fast"])
    target_dir: str | None = None
    check_timeout_secs: float = 600.0


@dataclass
class MapperSettings:
    max_attempts: int = 3


@dataclass
class OrchestratorSettings:
    translate_retries: int = 3
    refactor_rounds: int = 1
    verify_retries: int = 3
    test_timeout_secs: int = 300
    max_agent_calls: int | None = None


@dataclass
class PipelineConfig:
    scan: ScanConfig = field(default_factory=ScanConfig)
    scaffold: ScaffoldConfig = field(default_factory=ScaffoldConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    toolchain: ToolchainConfig = field(default_factory=ToolchainConfig)
    mapper: MapperSettings = field(default_factory=MapperSettings)
    orchestrator: OrchestratorSettings = field(default_factory=OrchestratorSettings)
    mode: str = "full"
    interfaces: str | None = None

    @property
    def interface_mode(self) -> str:
        return "expert" if self.interfaces else "generated"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self) -> "PipelineConfig":
        self.scaffold.validate("scaffold")
        _min("mapper.max_attempts", self.mapper.max_attempts, 1)
        o = self.orchestrator
        _min("orchestrator.translate_retries", o.translate_retries, 1)
        _min("orchestrator.refactor_rounds", o.refactor_rounds, 0)
        _min("orchestrator.verify_retries", o.verify_retries, 0)
        _min("orchestrator.test_timeout_secs", o.test_timeout_secs, 1)
        if o.max_agent_calls is not None:
            _min("orchestrator.max_agent_calls", o.max_agent_calls, 1)
        if not self.agent.timeout_secs > 0:
            raise ValidationError("agent.timeout_secs", "must be > 0")
        if not self.toolchain.check_cmd:
            raise ValidationError("toolchain.check_cmd", "must not be empty")
        if not self.toolchain.test_cmd:
            raise ValidationError("toolchain.test_cmd", "must not be empty")
        try:
            self.mode = normalize_mode(self.mode)
        except ValueError as exc:
            raise ValidationError("mode", str(exc)) from None
        if self.interfaces is not None and not Path(self.interfaces).is_dir():
            raise ValidationError("interfaces", f"{self.interfaces} is not a directory")
        if self.agent.mock_script is not None and not Path(self.agent.mock_script).is_file():
            raise ValidationError("agent.mock_script", f"{self.agent.mock_script} does not exist")
        return self


def _min(key: str, value, lo: int) -> None:
    if isinstance(value, bool) or not isinstance(value, int) or value < lo:
        raise ValidationError(key, f"must be an integer >= {lo}")


def _coerce(key: str, value, hint):
    """Check ``value`` against the field's annotation, converting where lossless."""
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(key, value, inner[0])
    if origin is list:
        if isinstance(value, str):
            value = [value]
        if not isinstance(value, list):
            raise ValidationError(key, "must be a list")
        return [str(v) for v in value]
    if hint is bool:
        if not isinstance(value, bool):
            raise ValidationError(key, "must be true or false")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValidationError(key, "must be an integer")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(key, "must be a number")
        return float(value)
    if hint is str:
        if not isinstance(value, (str, int, float)) or isinstance(value, bool):
            raise ValidationError(key, "must be a string")
        return str(value)
    return value


def _apply(obj, data: dict, prefix: str = "") -> None:
    if not isinstance(data, dict):
        raise ValidationError(prefix.rstrip(".") or "<root>", "must be a mapping")
    hints = typing.get_type_hints(type(obj))
    names = {f.name for f in dataclasses.fields(obj)}
    for key, value in data.items():
        path = f"{prefix}{key}"
        if key not in names:
            raise ValidationError(path, "unknown key")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            _apply(current, value, path + ".")
        else:
            setattr(obj, key, _coerce(path, value, hints[key]))


def _nest(dotted: dict) -> dict:
    out: dict = {}
    for key, value in dotted.items():
        parts = key.split(".")
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return out


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    dotted = {}
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX) or name[len(ENV_PREFIX):] == "":
            continue
        key = name[len(ENV_PREFIX):].lower().replace("__", ".")
        if key in ("config", "home"):
            continue
        try:
            dotted[key] = yaml.safe_load(raw) if raw != "" else None
        except yaml.YAMLError:
            dotted[key] = raw
    return dotted


def load_config(path=None, cli_overrides: dict | None = None, environ=None) -> PipelineConfig:
    """Build a validated config; ``cli_overrides`` maps dotted keys to values."""
    cfg = PipelineConfig()
    if path is not None:
        try:
            data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ValidationError("<file>", f"{path} is not valid YAML: {exc}") from None
        _apply(cfg, data)
    overrides = {k: v for k, v in (cli_overrides or {}).items() if v is not None}
    _apply(cfg, _nest(overrides))
    _apply(cfg, _nest(env_overrides(environ)))
    return cfg.validate()
