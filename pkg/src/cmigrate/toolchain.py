"""Adapter over the target crate's build and test commands.

Verdicts come only from exit codes and compiler output.  Build artifacts go
to a per-workspace directory outside the source tree so that checking and
testing never change what the analyzers and hashes see.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import shutil
import subprocess
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .errors import BuildFailed, PathOccupied, ToolchainMissing

log = logging.getLogger(__name__)

DEFAULT_CHECK_CMD = ["cargo", "check", "--message-format=json"]
DEFAULT_TEST_CMD = ["cargo", "test", "--no-fail-fast"]
DEFAULT_TEST_TIMEOUT = 300
DEFAULT_CHECK_TIMEOUT = 600


@dataclass
class Diagnostic:
    level: str
    message: str
    code: str | None = None
    file: str | None = None
    line: int | None = None

    def render(self) -> str:
        where = f"{self.file}:{self.line}: " if self.file else ""
        code = f"[{self.code}]" if self.code else ""
        return f"{where}{self.level}{code}: {self.message}"


@dataclass
class BuildOutcome:
    ok: bool
    diagnostics: list[Diagnostic] = field(default_factory=list)
    raw_output: str = ""
    parsed: bool = True

    @property
    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.level == "error"]

    def error_text(self, limit: int = 40) -> str:
        errs = self.errors[:limit]
        if not errs:
            return self.raw_output[-4000:]
        return "\n".join(d.render() for d in errs)

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "errors": len(self.errors),
            "warnings": sum(1 for d in self.diagnostics if d.level == "warning"),
            "diagnostics": [d.__dict__ for d in self.errors],
        }


@dataclass
class TestOutcome:
    ok: bool
    total: int = 0
    passed: int = 0
    failed: int = 0
    ignored: int = 0
    failed_names: list[str] = field(default_factory=list)
    raw_output: str = ""
    diagnostics: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "total": self.total,
            "passed": self.passed,
            "failed": self.failed,
            "ignored": self.ignored,
            "failed_names": list(self.failed_names),
            "diagnostics": list(self.diagnostics),
        }


def crate_name(name: str) -> str:
    slug = re.sub(r"[^a-z0-9_]", "_", name.lower()).strip("_") or "translated"
    if slug[0].isdigit():
        slug = "c_" + slug
    return slug


_TEST_LINE = re.compile(r"^test (.+?) \.\.\. (ok|FAILED|ignored)\b", re.M)
_LIST_LINE = re.compile(r"^(.+): test$", re.M)


def parse_test_output(text: str) -> tuple[int, int, int, list[str]]:
    passed = failed = ignored = 0
    failed_names = []
    for m in _TEST_LINE.finditer(text):
        status = m.group(2)
        if status == "ok":
            passed += 1
        elif status == "FAILED":
            failed += 1
            failed_names.append(m.group(1))
        else:
            ignored += 1
    return passed, failed, ignored, failed_names


def parse_check_output(stdout: str, workspace: Path) -> tuple[list[Diagnostic], list[str], bool]:
    """Diagnostics from cargo's JSON message stream.

    Returns (diagnostics, rendered messages, any JSON seen).
    """
    diags: list[Diagnostic] = []
    rendered: list[str] = []
    saw_json = False
    for line in stdout.splitlines():
        line = line.strip()
        if not line.startswith("{"):
            continue
        try:
            msg = json.loads(line)
        except json.JSONDecodeError:
            continue
        saw_json = True
        if msg.get("reason") != "compiler-message":
            continue
        body = msg.get("message") or {}
        level = body.get("level", "")
        if level.startswith("error"):
            level = "error"
        elif level != "warning":
            continue
        text = body.get("message", "")
        if level == "error" and text.startswith("aborting due to"):
            continue
        spans = [s for s in body.get("spans", []) if s.get("is_primary")] or body.get("spans", [])
        file = line_no = None
        if spans:
            file = spans[0].get("file_name")
            line_no = spans[0].get("line_start")
            if file and os.path.isabs(file):
                try:
                    file = Path(file).relative_to(workspace).as_posix()
                except ValueError:
                    pass
        code = (body.get("code") or {}).get("code")
        diags.append(Diagnostic(level, text, code, file, line_no))
        if body.get("rendered"):
            rendered.append(body["rendered"])
    return diags, rendered, saw_json


class Toolchain:
    def __init__(self, check_cmd=None, test_cmd=None, target_dir=None,
                 test_timeout: float = DEFAULT_TEST_TIMEOUT, check_timeout: float = DEFAULT_CHECK_TIMEOUT):
        self.check_cmd = list(check_cmd or DEFAULT_CHECK_CMD)
        self.test_cmd = list(test_cmd or DEFAULT_TEST_CMD)
        self.target_dir = Path(target_dir) if target_dir else None
        self.test_timeout = test_timeout
        self.check_timeout = check_timeout
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        self.invocations = 0

    @property
    def program(self) -> str:
        return self.check_cmd[0]

    def available(self) -> bool:
        return shutil.which(self.program) is not None

    def require(self) -> None:
        if not self.available():
            raise ToolchainMissing(
                f"{self.program!r} not found on PATH; install the Rust toolchain (https://rustup.rs) "
                "or set toolchain.check_cmd / toolchain.test_cmd"
            )

    def build_dir(self, workspace) -> Path:
        key = hashlib.sha256(str(Path(workspace).resolve()).encode()).hexdigest()[:16]
        if self.target_dir is not None:
            return self.target_dir / key
        cache = Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache"))
        return cache / "cmigrate" / "targets" / key

    def _lock(self, workspace) -> threading.Lock:
        key = str(Path(workspace).resolve())
        with self._locks_guard:
            return self._locks.setdefault(key, threading.Lock())

    def _run(self, argv, workspace, timeout):
        self.require()
        env = dict(os.environ)
        env.update(
            CARGO_TARGET_DIR=str(self.build_dir(workspace)),
            RUST_BACKTRACE="0",
            CARGO_TERM_COLOR="never",
        )
        self.invocations += 1
        with self._lock(workspace):
            return subprocess.run(argv, cwd=str(workspace), env=env, capture_output=True,
                                  text=True, errors="replace", timeout=timeout)

    def init_project(self, path, name: str) -> Path:
        """Create a library crate with an empty module tree and a lockfile."""
        path = Path(path)
        if path.exists() and any(path.iterdir()):
            raise PathOccupied(f"{path} is not empty")
        self.require()
        cargo = self.program
        name = crate_name(name)
        if path.exists():
            argv = [cargo, "init", "--lib", "--vcs", "none", "--name", name, str(path)]
        else:
            path.parent.mkdir(parents=True, exist_ok=True)
            argv = [cargo, "new", "--lib", "--vcs", "none", "--name", name, str(path)]
        proc = subprocess.run(argv, capture_output=True, text=True)
        if proc.returncode != 0:
            raise ToolchainMissing(f"{' '.join(argv)} failed: {proc.stderr.strip()}")
        (path / "src" / "lib.rs").write_text("", encoding="utf-8")
        self.ensure_lockfile(path)
        return path

    def ensure_lockfile(self, workspace) -> None:
        workspace = Path(workspace)
        if (workspace / "Cargo.lock").exists():
            return
        proc = self._run([self.program, "generate-lockfile"], workspace, self.check_timeout)
        if proc.returncode != 0:
            log.warning("generate-lockfile failed in %s: %s", workspace, proc.stderr.strip())

    def check(self, workspace, all_targets: bool = False) -> BuildOutcome:
        """Type-check the crate; ``all_targets`` also checks test code."""
        workspace = Path(workspace)
        argv = list(self.check_cmd) + (["--all-targets"] if all_targets else [])
        try:
            proc = self._run(argv, workspace, self.check_timeout)
        except subprocess.TimeoutExpired:
            return BuildOutcome(False, [Diagnostic("error", f"check timed out after {self.check_timeout}s")],
                                "", parsed=False)
        diags, rendered, saw_json = parse_check_output(proc.stdout, workspace.resolve())
        raw = "\n".join(rendered) + ("\n" if rendered else "") + proc.stderr
        outcome = BuildOutcome(ok=False, diagnostics=diags, raw_output=raw, parsed=saw_json)
        if proc.returncode != 0 and not outcome.errors:
            tail = "\n".join(proc.stderr.strip().splitlines()[-15:]) or f"exit status {proc.returncode}"
            outcome.diagnostics.append(Diagnostic("error", tail))
        outcome.ok = proc.returncode == 0 and not outcome.errors
        return outcome

    def build_tests(self, workspace) -> BuildOutcome:
        """Compile and link the test harnesses without running them."""
        workspace = Path(workspace)
        argv = list(self.test_cmd[:2]) + ["--no-run", "--message-format=json"]
        try:
            proc = self._run(argv, workspace, self.check_timeout)
        except subprocess.TimeoutExpired:
            return BuildOutcome(False, [Diagnostic("error", "test build timed out")], "", parsed=False)
        diags, rendered, saw_json = parse_check_output(proc.stdout, workspace.resolve())
        outcome = BuildOutcome(False, diags, "\n".join(rendered) + proc.stderr, saw_json)
        if proc.returncode != 0 and not outcome.errors:
            tail = "\n".join(proc.stderr.strip().splitlines()[-15:]) or f"exit status {proc.returncode}"
            outcome.diagnostics.append(Diagnostic("error", tail))
        outcome.ok = proc.returncode == 0 and not outcome.errors
        return outcome

    def run_tests(self, workspace, filter: str | None = None) -> TestOutcome:
        workspace = Path(workspace)
        argv = list(self.test_cmd) + ([filter] if filter else [])
        try:
            proc = self._run(argv, workspace, self.test_timeout)
        except subprocess.TimeoutExpired as exc:
            out = (exc.stdout or "") if isinstance(exc.stdout, str) else ""
            passed, failed, ignored, names = parse_test_output(out)
            return TestOutcome(False, passed + failed, passed, failed, ignored, names, out,
                               [f"test suite timed out after {self.test_timeout}s"])
        out = proc.stdout + "\n" + proc.stderr
        if proc.returncode != 0 and "running " not in proc.stdout:
            raise BuildFailed("test build failed", out)
        passed, failed, ignored, names = parse_test_output(proc.stdout)
        diags = []
        if proc.returncode != 0 and failed == 0:
            diags.append(f"test harness exited with status {proc.returncode}")
        return TestOutcome(
            ok=failed == 0 and proc.returncode == 0,
            total=passed + failed,
            passed=passed,
            failed=failed,
            ignored=ignored,
            failed_names=names,
            raw_output=out,
            diagnostics=diags,
        )

    def list_tests(self, workspace) -> list[str]:
        """Names the harness would run, or [] when the tests do not build."""
        argv = list(self.test_cmd) + ["--", "--list"]
        try:
            proc = self._run(argv, Path(workspace), self.test_timeout)
        except subprocess.TimeoutExpired:
            return []
        if proc.returncode != 0:
            return []
        return [m.group(1) for m in _LIST_LINE.finditer(proc.stdout)]
