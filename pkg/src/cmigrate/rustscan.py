"""Token-aware scanning of Rust sources: fn declarations, bodies, unsafe regions."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

from .fsutil import iter_files
from .lexing import Comment, line_of, line_starts, mask_rust, match_brace

_FN_RE = re.compile(r"\bfn\s+(?:r#)?([A-Za-z_][A-Za-z0-9_]*)")
_IMPL_RE = re.compile(r"\bimpl\b")
_TEST_ATTR_RE = re.compile(r"#\s*\[\s*(?:[A-Za-z_][\w]*\s*::\s*)*test\s*\]")
_RAW_PTR_RE = re.compile(r"\*\s*(?:const|mut)\b")
_UNSAFE_RE = re.compile(r"\bunsafe\b")


@dataclass
class FnDecl:
    name: str
    offset: int
    line: int
    body_open: int = -1
    body_close: int = -1
    is_pub: bool = False
    is_unsafe: bool = False
    is_test: bool = False
    owner: str | None = None
    signature: str = ""

    @property
    def has_body(self) -> bool:
        return self.body_open >= 0 and self.body_close >= 0


def _item_prefix(masked: str, start: int) -> str:
    """Text between the previous item boundary and ``start``."""
    b = max(masked.rfind(";", 0, start), masked.rfind("{", 0, start), masked.rfind("}", 0, start))
    return masked[b + 1:start]


def _body_bounds(masked: str, after: int) -> tuple[int, int]:
    """(open, close) of the body following a signature, (-1, -1) if none."""
    depth = 0
    for j in range(after, len(masked)):
        c = masked[j]
        if c in "([":
            depth += 1
        elif c in ")]":
            depth -= 1
        elif depth == 0 and c == ";":
            return -1, -1
        elif depth == 0 and c == "{":
            return j, match_brace(masked, j)
    return -1, -1


def _impl_owner(header: str) -> str | None:
    h = header.strip()
    if h.startswith("<"):
        depth = 0
        for k, ch in enumerate(h):
            depth += ch == "<"
            depth -= ch == ">"
            if depth == 0:
                h = h[k + 1:]
                break
    if re.search(r"\bfor\b", h):
        h = re.split(r"\bfor\b", h, maxsplit=1)[1]
    m = re.search(r"[A-Za-z_]\w*", h)
    return m.group(0) if m else None


@dataclass
class RustFile:
    path: str
    text: str
    masked: str = ""
    comments: list[Comment] = field(default_factory=list)

    def __post_init__(self):
        self.masked, self.comments = mask_rust(self.text)

    @cached_property
    def starts(self) -> list[int]:
        return line_starts(self.text)

    def line(self, offset: int) -> int:
        return line_of(self.starts, offset)

    @cached_property
    def impl_blocks(self) -> list[tuple[int, int, str | None]]:
        blocks = []
        for m in _IMPL_RE.finditer(self.masked):
            open_, close = _body_bounds(self.masked, m.end())
            if open_ < 0:
                continue
            blocks.append((open_, close, _impl_owner(self.masked[m.end():open_])))
        return blocks

    @cached_property
    def functions(self) -> list[FnDecl]:
        out = []
        for m in _FN_RE.finditer(self.masked):
            prefix = _item_prefix(self.masked, m.start())
            tail = prefix.rsplit("]", 1)[-1]
            open_, close = _body_bounds(self.masked, m.end())
            owner = None
            for b_open, b_close, name in self.impl_blocks:
                if b_open < m.start() < b_close:
                    owner = name
            sig_end = open_ if open_ >= 0 else self.masked.find(";", m.end())
            out.append(FnDecl(
                name=m.group(1),
                offset=m.start(),
                line=self.line(m.start()),
                body_open=open_,
                body_close=close,
                is_pub=bool(re.search(r"\bpub\b", tail)),
                is_unsafe=bool(_UNSAFE_RE.search(tail)),
                is_test=bool(_TEST_ATTR_RE.search(prefix)),
                owner=owner,
                signature=" ".join(self.masked[m.start():sig_end].split()),
            ))
        return out

    def find(self, name: str) -> list[FnDecl]:
        return [f for f in self.functions if f.name == name]

    def body_code(self, fn: FnDecl) -> str:
        return self.masked[fn.body_open + 1:fn.body_close]

    def comments_within(self, start: int, end: int) -> list[Comment]:
        return [c for c in self.comments if start <= c.start < end]

    @cached_property
    def unsafe_regions(self) -> list[tuple[int, int]]:
        """(start, close-brace offset) for unsafe blocks and unsafe fn bodies."""
        regions = []
        masked = self.masked
        for m in _UNSAFE_RE.finditer(masked):
            j = m.end()
            while j < len(masked) and masked[j].isspace():
                j += 1
            if j < len(masked) and masked[j] == "{":
                close = match_brace(masked, j)
                if close > 0:
                    regions.append((m.start(), close))
                continue
            fn = re.compile(r'\s*(?:extern\s*(?:"[^"\n]*"\s*)?)?fn\b').match(masked, m.end())
            if fn:
                open_, close = _body_bounds(masked, fn.end())
                if open_ >= 0 and close > 0:
                    regions.append((m.start(), close))
        return regions

    def in_unsafe(self, offset: int) -> bool:
        return any(s <= offset <= e for s, e in self.unsafe_regions)

    def code_lines(self) -> set[int]:
        """1-based numbers of lines carrying code after comment removal."""
        return {i + 1 for i, ln in enumerate(self.masked.split("\n")) if ln.strip()}

    def raw_pointer_types(self) -> list[int]:
        return [m.start() for m in _RAW_PTR_RE.finditer(self.masked)]


class RustIndex:
    """All ``.rs`` files of a workspace, keyed by workspace-relative path."""

    def __init__(self, workspace, files: dict[str, RustFile] | None = None):
        self.root = Path(workspace)
        if files is None:
            files = {}
            if self.root.is_dir():
                for p in iter_files(self.root, suffixes=(".rs",)):
                    rel = p.relative_to(self.root).as_posix()
                    files[rel] = RustFile(rel, p.read_text(encoding="utf-8", errors="replace"))
        self.files = files

    @classmethod
    def from_sources(cls, sources: dict[str, str]) -> "RustIndex":
        return cls(".", {p: RustFile(p, t) for p, t in sources.items()})

    def declarations(self, include_tests: bool = False):
        for path in sorted(self.files):
            for fn in self.files[path].functions:
                if fn.is_test and not include_tests:
                    continue
                yield path, fn

    def test_functions(self):
        for path in sorted(self.files):
            for fn in self.files[path].functions:
                if fn.is_test:
                    yield path, fn
