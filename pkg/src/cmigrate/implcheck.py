"""Static check that a translated function body is a real implementation."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .rustscan import RustFile, RustIndex

UNIMPLEMENTED_MACRO = "unimplemented_macro"
TODO_COMMENT = "todo_comment"
MISSING_FUNCTION = "missing_function"
EMPTY_BODY = "empty_body"

_PLACEHOLDER_RE = re.compile(r"\b(?:unimplemented|todo)\s*!")
_TODO_RE = re.compile(r"\b(?:TODO|FIXME)\b", re.I)


@dataclass
class Finding:
    kind: str
    location: str

    def to_dict(self) -> dict:
        return {"kind": self.kind, "location": self.location}


@dataclass
class CheckResult:
    findings: list[Finding] = field(default_factory=list)

    @property
    def implemented(self) -> bool:
        return not self.findings

    def summary(self) -> str:
        return "; ".join(f"{f.kind} at {f.location}" for f in self.findings) or "implemented"


def _resolve_file(workspace, rust_module, index: RustIndex | None) -> RustFile | None:
    if index is not None and rust_module in index.files:
        return index.files[rust_module]
    path = Path(workspace) / rust_module
    if not path.is_file():
        return None
    return RustFile(rust_module, path.read_text(encoding="utf-8", errors="replace"))


def check_body(rf: RustFile, name: str) -> CheckResult:
    decls = [f for f in rf.find(name) if f.has_body]
    if not decls:
        return CheckResult([Finding(MISSING_FUNCTION, f"{rf.path}::{name}")])
    findings = []
    for fn in decls:
        body = rf.body_code(fn)
        where = f"{rf.path}:{fn.line}"
        if body.strip() in ("", "()"):
            findings.append(Finding(EMPTY_BODY, where))
        for m in _PLACEHOLDER_RE.finditer(body):
            findings.append(Finding(UNIMPLEMENTED_MACRO, f"{rf.path}:{rf.line(fn.body_open + 1 + m.start())}"))
        for c in rf.comments_within(fn.body_open, fn.body_close):
            # a commented-out placeholder is still a stub
            if _TODO_RE.search(c.text) or _PLACEHOLDER_RE.search(c.text):
                findings.append(Finding(TODO_COMMENT, f"{rf.path}:{rf.line(c.start)}"))
    return CheckResult(findings)


def implementation_check(workspace, rust_module: str, rust_function: str,
                         index: RustIndex | None = None) -> CheckResult:
    """Findings for ``rust_function`` in ``rust_module``; empty means implemented."""
    rf = _resolve_file(workspace, rust_module, index)
    if rf is None:
        return CheckResult([Finding(MISSING_FUNCTION, f"{rust_module} (file absent)")])
    return check_body(rf, rust_function)
