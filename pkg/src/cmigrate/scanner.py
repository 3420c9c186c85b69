"""Lexical extraction of functions, includes and type items from C sources.

No preprocessor is run.  Comments and literals are masked, directive lines
are blanked, and top-level function definitions are found by brace-depth
counting: a declarator ending in ``)`` followed by a body at depth 0.
Both arms of ``#if``/``#else`` are scanned as plain text.
"""

from __future__ import annotations

import fnmatch
import json
import logging
import os
import posixpath
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import DuplicateDefinition, EmptyRepository
from .lexing import IDENT_RE, line_of, line_starts, mask_c, match_brace

log = logging.getLogger(__name__)

C_KEYWORDS = frozenset(
    """auto break case char const continue default do double else enum extern
    float for goto if inline int long register restrict return short signed
    sizeof static struct switch typedef union unsigned void volatile while
    _Alignas _Alignof _Atomic _Bool _Complex _Generic _Imaginary _Noreturn
    _Static_assert _Thread_local __attribute__ __inline __inline__ __asm__
    asm __extension__ __typeof__ typeof alignof""".split()
)

C_SOURCE = "c_source"
HEADER = "header"

STANDARD = "standard"
STATIC_INLINE = "static_inline"
MACRO_WRAPPED = "macro_wrapped"

DEFAULT_TEST_MANIFEST = "c_tests.manifest"


@dataclass
class ScanConfig:
    ignore_globs: list[str] = field(default_factory=list)
    wrapper_macros: list[str] = field(default_factory=list)
    test_path_globs: list[str] = field(default_factory=lambda: ["*test*"])
    test_name_prefixes: list[str] = field(default_factory=lambda: ["test_"])
    test_manifest: str | None = DEFAULT_TEST_MANIFEST


@dataclass(frozen=True)
class SourceFile:
    path: str
    kind: str
    text: str
    line_count: int


@dataclass
class FunctionNode:
    name: str
    path: str
    signature_text: str
    body_span: tuple[int, int]
    body_text: str
    flavor: str = STANDARD
    call_sites: frozenset[str] = frozenset()

    @property
    def qualified_id(self) -> tuple[str, str]:
        return (self.path, self.name)


@dataclass(frozen=True)
class IncludeEdge:
    from_path: str
    to_path: str
    raw_directive: str


@dataclass(frozen=True)
class TypeItem:
    """A C type-level item the scaffolder translates before signatures.

    kind is one of struct, union, enum, typedef, macro_const, macro_fn,
    global.
    """

    kind: str
    name: str
    path: str
    span: tuple[int, int]
    text: str


@dataclass
class SourceModel:
    files: list[SourceFile]
    functions: list[FunctionNode]
    includes: list[IncludeEdge]
    test_functions: list[tuple[str, str]] = field(default_factory=list)
    type_items: list[TypeItem] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)

    def file(self, path: str) -> SourceFile:
        for f in self.files:
            if f.path == path:
                return f
        raise KeyError(path)

    def function(self, qid: tuple[str, str]) -> FunctionNode:
        for fn in self.functions:
            if fn.qualified_id == tuple(qid):
                return fn
        raise KeyError(qid)

    def is_test(self, qid) -> bool:
        return tuple(qid) in self._test_set()

    def _test_set(self):
        return {tuple(q) for q in self.test_functions}

    def to_dict(self, include_text: bool = False) -> dict:
        files = []
        for f in self.files:
            d = {"path": f.path, "kind": f.kind, "line_count": f.line_count}
            if include_text:
                d["text"] = f.text
            files.append(d)
        return {
            "files": files,
            "functions": [
                {
                    "name": fn.name,
                    "path": fn.path,
                    "signature_text": fn.signature_text,
                    "body_span": list(fn.body_span),
                    "flavor": fn.flavor,
                    "call_sites": sorted(fn.call_sites),
                    "body_text": fn.body_text,
                }
                for fn in self.functions
            ],
            "includes": [asdict(e) for e in self.includes],
            "test_functions": [{"path": p, "name": n} for p, n in self.test_functions],
            "type_items": [
                {"kind": t.kind, "name": t.name, "path": t.path, "span": list(t.span), "text": t.text}
                for t in self.type_items
            ],
            "diagnostics": list(self.diagnostics),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(**kw), indent=2)


def count_lines(text: str) -> int:
    if not text:
        return 0
    return text.count("\n") + (0 if text.endswith("\n") else 1)


def slice_lines(text: str, span: tuple[int, int]) -> str:
    lines = text.split("\n")
    return "\n".join(lines[span[0] - 1:span[1]])


def make_source_file(path: str, data: bytes | str) -> SourceFile:
    text = data.decode("utf-8", errors="replace") if isinstance(data, bytes) else data
    kind = HEADER if path.endswith(".h") else C_SOURCE
    return SourceFile(path=path, kind=kind, text=text, line_count=count_lines(text))


# --- preprocessor view -----------------------------------------------------


@dataclass
class _Directive:
    line: int
    keyword: str
    rest: str
    raw: str


def _directives(masked: str, raw: str) -> tuple[str, list[_Directive], list[tuple]]:
    """Blank directive lines; return (code view, directives, branch per line)."""
    lines = masked.split("\n")
    raw_lines = raw.split("\n")
    code = list(lines)
    directives: list[_Directive] = []
    branch: list[tuple] = []
    stack: list[int] = []
    counter = 0
    i = 0
    while i < len(lines):
        stripped = lines[i].lstrip()
        if stripped.startswith("#"):
            start = i
            parts = [lines[i]]
            while lines[i].rstrip().endswith("\\") and i + 1 < len(lines):
                i += 1
                parts.append(lines[i])
            joined = " ".join(p.rstrip().rstrip("\\") for p in parts).strip()[1:].strip()
            m = re.match(r"([A-Za-z_]+)\s*(.*)", joined)
            kw, rest = (m.group(1), m.group(2)) if m else ("", joined)
            raw_text = "\n".join(raw_lines[start:i + 1])
            directives.append(_Directive(start + 1, kw, rest, raw_text))
            if kw in ("if", "ifdef", "ifndef"):
                counter += 1
                stack.append(counter)
            elif kw in ("elif", "else", "elifdef", "elifndef"):
                counter += 1
                if stack:
                    stack[-1] = counter
            elif kw == "endif" and stack:
                stack.pop()
            for k in range(start, i + 1):
                code[k] = " " * len(lines[k])
                branch.append(tuple(stack))
        else:
            branch.append(tuple(stack))
        i += 1
    return "\n".join(code), directives, branch


# --- call sites --------------------------------------------------------------


_CALL_RE = re.compile(r"(?<![A-Za-z0-9_])([A-Za-z_][A-Za-z0-9_]*)\s*\(")


def _calls_in_masked(masked: str) -> set[str]:
    found = set()
    for m in _CALL_RE.finditer(masked):
        name = m.group(1)
        if name in C_KEYWORDS:
            continue
        before = masked[:m.start()].rstrip()
        # member calls through a struct field are function pointers, not names
        if before.endswith(".") or before.endswith("->"):
            continue
        found.add(name)
    return found


def extract_call_sites(body_text: str, known_names=None) -> set[str]:
    """Identifiers that are called in ``body_text``, optionally filtered."""
    calls = _calls_in_masked(mask_c(body_text))
    if known_names is not None:
        calls &= set(known_names)
    return calls


# --- includes ----------------------------------------------------------------


_QUOTED_INCLUDE = re.compile(r'^[ \t]*#[ \t]*include[ \t]*"([^"\n]+)"', re.M)


def extract_includes(file: SourceFile, model_files, diagnostics: list | None = None) -> list[IncludeEdge]:
    model_files = set(model_files)
    edges = []
    seen = set()
    for m in _QUOTED_INCLUDE.finditer(file.text):
        target = m.group(1).strip()
        here = posixpath.dirname(file.path)
        candidates = [posixpath.normpath(posixpath.join(here, target)), posixpath.normpath(target)]
        resolved = next((c for c in candidates if c in model_files), None)
        if resolved is None:
            msg = f"{file.path}: unresolved include \"{target}\""
            log.debug(msg)
            if diagnostics is not None:
                diagnostics.append(msg)
            continue
        if resolved in seen:
            continue
        seen.add(resolved)
        edges.append(IncludeEdge(file.path, resolved, m.group(0).strip()))
    return edges


# --- functions and type items ------------------------------------------------


_KR_RE = re.compile(
    r"([A-Za-z_]\w*)\s*\(\s*[A-Za-z_]\w*(?:\s*,\s*[A-Za-z_]\w*)*\s*\)\s*(?:[^;{}()]+;\s*)+$"
)


def _paren_open(code: str, close_idx: int) -> int:
    depth = 0
    for j in range(close_idx, -1, -1):
        if code[j] == ")":
            depth += 1
        elif code[j] == "(":
            depth -= 1
            if depth == 0:
                return j
    return -1


def _ident_ending_at(code: str, end: int) -> tuple[str, int] | None:
    """Identifier whose last char is at ``end - 1`` (after skipping spaces)."""
    j = end
    while j > 0 and code[j - 1].isspace():
        j -= 1
    k = j
    while k > 0 and (code[k - 1].isalnum() or code[k - 1] == "_"):
        k -= 1
    if k == j or code[k].isdigit():
        return None
    return code[k:j], k


def _declarator_name(code: str, seg_start: int, seg_end: int, wrappers) -> tuple[str, str, int] | None:
    """Resolve the function name of a top-level ``... ( ... ) {`` segment.

    Returns (name, flavor, name_offset) or None when the segment is not a
    function definition this scanner supports.
    """
    j = seg_end
    while j > seg_start and code[j - 1].isspace():
        j -= 1
    if j <= seg_start or code[j - 1] != ")":
        return None
    params_open = _paren_open(code, j - 1)
    if params_open < seg_start:
        return None
    segment = code[seg_start:params_open]
    if re.search(r"=", segment):
        return None
    found = _ident_ending_at(code, params_open)
    if found is not None:
        name, pos = found
        if pos < seg_start:
            return None
        if name in wrappers:
            # TEST(name) { ... } style: the wrapper occupies the whole declarator
            inner = code[params_open + 1:j - 1].strip()
            if IDENT_RE.fullmatch(inner):
                return inner, MACRO_WRAPPED, params_open + 1 + code[params_open + 1:j - 1].index(inner)
        if name in C_KEYWORDS:
            return None
        return name, STANDARD, pos
    # name position is a parenthesised group: MACRO(name)(params)
    k = params_open
    while k > seg_start and code[k - 1].isspace():
        k -= 1
    if k > seg_start and code[k - 1] == ")":
        inner_open = _paren_open(code, k - 1)
        macro = _ident_ending_at(code, inner_open) if inner_open > seg_start else None
        inner = code[inner_open + 1:k - 1].strip() if inner_open >= 0 else ""
        if macro and macro[0] in wrappers and IDENT_RE.fullmatch(inner):
            return inner, MACRO_WRAPPED, inner_open + 1 + code[inner_open + 1:k - 1].index(inner)
    return None


def _first_nonspace(code: str, start: int, end: int) -> int:
    j = start
    while j < end and code[j].isspace():
        j += 1
    return j


def _classify_item(stmt: str) -> tuple[str, str] | None:
    """(kind, name) for a top-level ``;``-terminated declaration, or None."""
    s = " ".join(stmt.split())
    if not s:
        return None
    body = re.sub(r"\{.*\}", "{}", s)
    if s.startswith("typedef"):
        if "{" in s:
            kind = next((k for k in ("struct", "union", "enum") if re.match(rf"typedef\s+{k}\b", s)), "typedef")
        else:
            kind = "typedef"
        m = re.search(r"\(\s*\*\s*([A-Za-z_]\w*)\s*\)", body)
        if m and kind == "typedef":
            return kind, m.group(1)
        names = IDENT_RE.findall(body.split("}")[-1])
        names = [n for n in names if n not in C_KEYWORDS]
        return (kind, names[-1]) if names else None
    m = re.match(r"(struct|union|enum)\s+([A-Za-z_]\w*)\s*\{", s)
    if m and re.search(r"\}\s*$", body):
        return m.group(1), m.group(2)
    if re.match(r"(struct|union|enum)\s+[A-Za-z_]\w*$", s):
        return None  # forward declaration
    if s.startswith("extern") or s.startswith("_Static_assert"):
        return None
    if re.search(r"\)\s*(?:__attribute__\s*\(\(.*\)\))?\s*$", body) and "=" not in body:
        return None  # prototype
    lhs = body.split("=")[0]
    lhs = re.sub(r"\[[^\]]*\]", "", lhs)
    names = [n for n in IDENT_RE.findall(lhs) if n not in C_KEYWORDS]
    if not names:
        return None
    return "global", names[-1]


def _scan_file(file: SourceFile, config: ScanConfig):
    masked = mask_c(file.text)
    code, directives, branch = _directives(masked, file.text)
    starts = line_starts(file.text)
    wrappers = set(config.wrapper_macros)
    functions: list[tuple[FunctionNode, tuple]] = []
    items: list[TypeItem] = []
    diags: list[str] = []

    for d in directives:
        if d.keyword != "define":
            continue
        m = re.match(r"([A-Za-z_]\w*)(\()?(.*)", d.rest)
        if not m:
            continue
        name, is_fn, value = m.group(1), m.group(2), m.group(3).strip()
        if is_fn:
            items.append(TypeItem("macro_fn", name, file.path, (d.line, d.line + d.raw.count("\n")), d.raw))
        elif value:
            items.append(TypeItem("macro_const", name, file.path, (d.line, d.line + d.raw.count("\n")), d.raw))

    depth = 0
    seg_start = 0
    transparent = 0
    i = 0
    n = len(code)
    while i < n:
        c = code[i]
        if c == "{" and depth == 0:
            seg = code[seg_start:i]
            if re.fullmatch(r'\s*extern\s*"\.*"\s*', seg):
                transparent += 1
                seg_start = i + 1
                i += 1
                continue
            close = match_brace(code, i)
            if close < 0:
                diags.append(f"{file.path}: unbalanced braces; no functions recorded")
                return [], [], diags
            decl = _declarator_name(code, seg_start, i, wrappers)
            if decl is not None:
                name, flavor, _pos = decl
                sig_begin = _first_nonspace(code, seg_start, i)
                sig_text = " ".join(file.text[sig_begin:i].split())
                head = code[sig_begin:i]
                if flavor == STANDARD and re.search(r"\bstatic\b", head) and re.search(r"\b(?:inline|__inline|__inline__)\b", head):
                    flavor = STATIC_INLINE
                span = (line_of(starts, sig_begin), line_of(starts, close))
                calls = _calls_in_masked(code[i:close + 1])
                node = FunctionNode(
                    name=name,
                    path=file.path,
                    signature_text=sig_text,
                    body_span=span,
                    body_text=slice_lines(file.text, span),
                    flavor=flavor,
                    call_sites=frozenset(calls),
                )
                functions.append((node, branch[span[0] - 1] if span[0] - 1 < len(branch) else ()))
                seg_start = close + 1
                i = close + 1
                continue
            if not seg.strip():
                prior = code[:seg_start]
                last = max(prior.rfind("}"), 0)
                m = _KR_RE.search(prior[last:])
                if m and m.group(1) not in C_KEYWORDS:
                    diags.append(f"{file.path}:{line_of(starts, i)}: K&R-style definition of {m.group(1)} is not supported")
                    seg_start = close + 1
                    i = close + 1
                    continue
            # struct/enum/union/initializer body: continue to the terminating ';'
            i = close + 1
            continue
        if c == "}" and depth == 0:
            if transparent:
                transparent -= 1
                seg_start = i + 1
            i += 1
            continue
        if c == ";":
            stmt_begin = _first_nonspace(code, seg_start, i)
            item = _classify_item(code[stmt_begin:i])
            if item is not None:
                kind, name = item
                span = (line_of(starts, stmt_begin), line_of(starts, i))
                items.append(TypeItem(kind, name, file.path, span, slice_lines(file.text, span)))
            seg_start = i + 1
        i += 1

    # a '(' ... ')' spanning a depth-0 brace is not tracked; depth stays 0 by construction
    return functions, items, diags


def extract_functions(file: SourceFile, config: ScanConfig | None = None, diagnostics=None) -> list[FunctionNode]:
    """Top-level function definitions of one file, de-duplicated by name.

    Duplicates in alternative ``#if`` branches keep the first occurrence and
    add a diagnostic; duplicates in the same branch raise.
    """
    config = config or ScanConfig()
    found, _items, diags = _scan_file(file, config)
    if diagnostics is not None:
        diagnostics.extend(diags)
    return _dedupe(file, found, diagnostics)


def _dedupe(file, found, diagnostics) -> list[FunctionNode]:
    seen: dict[str, tuple] = {}
    result = []
    for node, br in found:
        if node.name in seen:
            if seen[node.name] == br:
                raise DuplicateDefinition(f"{file.path}: function {node.name} defined twice")
            if diagnostics is not None:
                diagnostics.append(
                    f"{file.path}:{node.body_span[0]}: duplicate {node.name} in another conditional branch; keeping the first"
                )
            continue
        seen[node.name] = br
        result.append(node)
    return result


def _matches_any(path: str, globs) -> bool:
    name = posixpath.basename(path)
    return any(fnmatch.fnmatchcase(path, g) or fnmatch.fnmatchcase(name, g) for g in globs)


def is_test_path(path: str, config: ScanConfig) -> bool:
    return _matches_any(path, config.test_path_globs)


def _read_manifest(text: str) -> list[tuple[str | None, str]]:
    out = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" in line:
            p, n = line.rsplit(":", 1)
            out.append((p.strip(), n.strip()))
        else:
            out.append((None, line))
    return out


def detect_test_functions(model: SourceModel, config: ScanConfig, manifest_text: str | None = None) -> list[tuple[str, str]]:
    """Functions selected by path glob, name prefix, or the manifest."""
    manifest = _read_manifest(manifest_text) if manifest_text else []
    result = []
    for fn in model.functions:
        hit = (
            is_test_path(fn.path, config)
            or any(fn.name.startswith(p) for p in config.test_name_prefixes)
            or any(n == fn.name and (p is None or p == fn.path) for p, n in manifest)
        )
        if hit:
            result.append(fn.qualified_id)
    return result


def scan_sources(sources: dict[str, bytes | str], config: ScanConfig | None = None, manifest_text: str | None = None) -> SourceModel:
    """Build a SourceModel from an in-memory ``{relative path: contents}`` map."""
    config = config or ScanConfig()
    paths = sorted(
        p for p in sources
        if (p.endswith(".c") or p.endswith(".h")) and not _matches_any(p, config.ignore_globs)
    )
    if not paths:
        raise EmptyRepository("no .c or .h files found")
    files = [make_source_file(p, sources[p]) for p in paths]
    diagnostics: list[str] = []
    functions: list[FunctionNode] = []
    items: list[TypeItem] = []
    for f in files:
        found, file_items, diags = _scan_file(f, config)
        diagnostics.extend(diags)
        functions.extend(_dedupe(f, found, diagnostics))
        items.extend(file_items)
    includes = []
    path_set = set(paths)
    for f in files:
        includes.extend(extract_includes(f, path_set, diagnostics))
    functions.sort(key=lambda fn: (fn.path, fn.body_span[0]))
    items.sort(key=lambda t: (t.path, t.span[0]))
    model = SourceModel(files=files, functions=functions, includes=includes,
                        type_items=items, diagnostics=diagnostics)
    model.test_functions = detect_test_functions(model, config, manifest_text)
    return model


def scan_repository(repo_root, config: ScanConfig | None = None) -> SourceModel:
    config = config or ScanConfig()
    root = Path(repo_root)
    if not root.is_dir():
        raise FileNotFoundError(f"repository root {root} does not exist")
    sources: dict[str, bytes] = {}
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for fname in sorted(filenames):
            if not (fname.endswith(".c") or fname.endswith(".h")):
                continue
            full = Path(dirpath) / fname
            rel = full.relative_to(root).as_posix()
            sources[rel] = full.read_bytes()
    manifest_text = None
    if config.test_manifest:
        mpath = root / config.test_manifest
        if mpath.is_file():
            manifest_text = mpath.read_text(encoding="utf-8", errors="replace")
    return scan_sources(sources, config, manifest_text)
