"""Safety counts and coverage metrics over a translated workspace.

Counting rules, stated once so the numbers stay comparable:

* LoC counts non-blank lines that still contain code once comments are
  removed, over every ``.rs`` file (tests included, ``target/`` excluded).
* uLoC counts those lines inside ``unsafe { }`` blocks and inside the
  bodies of ``unsafe fn``.  The line holding the ``unsafe`` keyword is
  included.  A region's closing-brace line counts only if code precedes the
  brace on that line, or if an enclosing region covers it.
* ptr_d counts every ``*const``/``*mut`` type occurrence (bindings, fields,
  parameters, return types, casts, generic arguments).
* ptr_* counts unary ``*`` dereferences that sit inside an unsafe region.
  This is syntactic: operand types are not resolved.

Keywords and pointer syntax inside comments or string literals never count.
"""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

from .implcheck import implementation_check
from .mapper import FunctionMapping, MappingTable, Unresolved, normalize_name
from .rustscan import RustFile, RustIndex
from .scanner import SourceModel

_UNARY_KEYWORDS = frozenset({"return", "in", "let", "match", "if", "while", "else", "break", "yield"})
_RAW_PTR_AHEAD = re.compile(r"\*\s*(?:const|mut)\b")


def round_pct(numerator: int, denominator: int) -> float:
    """100 * n / d to one decimal, halves rounded away from zero; 0 if d == 0."""
    if denominator <= 0:
        return 0.0
    tenths = Fraction(1000 * numerator, denominator)
    sign = -1 if tenths < 0 else 1
    tenths = abs(tenths)
    whole = int(tenths)
    if tenths - whole >= Fraction(1, 2):
        whole += 1
    return sign * whole / 10


@dataclass
class SafetyReport:
    ptr_decls: int = 0
    ptr_derefs: int = 0
    unsafe_loc: int = 0
    total_loc: int = 0
    pct_unsafe: float = 0.0
    per_file: dict = field(default_factory=dict)
    diagnostics: list[str] = field(default_factory=list)

    def to_dict(self, per_file: bool = False) -> dict:
        d = {
            "ptr_d": self.ptr_decls,
            "ptr_*": self.ptr_derefs,
            "uLoC": self.unsafe_loc,
            "%Unsafe": self.pct_unsafe,
            "LoC": self.total_loc,
        }
        if per_file:
            d["per_file"] = self.per_file
        return d


@dataclass
class FileCounts:
    ptr_decls: int
    ptr_derefs: int
    unsafe_loc: int
    total_loc: int


def _unsafe_lines(rf: RustFile) -> set[int]:
    lines: set[int] = set()
    code = rf.code_lines()
    for start, close in rf.unsafe_regions:
        first, last = rf.line(start), rf.line(close)
        for ln in range(first, last + 1):
            if ln not in code:
                continue
            if ln == last and last != first:
                line_start = rf.starts[ln - 1]
                if not rf.masked[line_start:close].strip():
                    continue
            lines.add(ln)
    return lines


def _prev_token(masked: str, i: int) -> str:
    j = i - 1
    while j >= 0 and masked[j].isspace():
        j -= 1
    if j < 0:
        return ""
    if masked[j].isalnum() or masked[j] == "_":
        k = j
        while k > 0 and (masked[k - 1].isalnum() or masked[k - 1] == "_"):
            k -= 1
        return masked[k:j + 1]
    return masked[j]


def _next_char(masked: str, i: int) -> str:
    j = i + 1
    while j < len(masked) and masked[j].isspace():
        j += 1
    return masked[j] if j < len(masked) else ""


def _is_unary_star(masked: str, i: int) -> bool:
    if _RAW_PTR_AHEAD.match(masked, i):
        return False
    nxt = _next_char(masked, i)
    if nxt == "=" or not (nxt.isalpha() or nxt in "_(*&"):
        return False
    prev = _prev_token(masked, i)
    if not prev:
        return True
    if prev[0].isalnum() or prev[0] == "_":
        return prev in _UNARY_KEYWORDS
    return prev not in ")]'\""


def count_file(rf: RustFile) -> FileCounts:
    masked = rf.masked
    seen: set[int] = set()
    for s, e in rf.unsafe_regions:
        for i in range(s, e + 1):
            if masked[i] == "*" and i not in seen and _is_unary_star(masked, i):
                seen.add(i)
    return FileCounts(
        ptr_decls=len(rf.raw_pointer_types()),
        ptr_derefs=len(seen),
        unsafe_loc=len(_unsafe_lines(rf)),
        total_loc=len(rf.code_lines()),
    )


def _files(workspace) -> dict[str, RustFile]:
    if isinstance(workspace, RustIndex):
        return workspace.files
    return RustIndex(workspace).files


def count_unsafe_loc(workspace) -> int:
    return sum(len(_unsafe_lines(rf)) for rf in _files(workspace).values())


def count_ptr_decls(workspace) -> int:
    return sum(len(rf.raw_pointer_types()) for rf in _files(workspace).values())


def count_ptr_derefs(workspace) -> int:
    return sum(count_file(rf).ptr_derefs for rf in _files(workspace).values())


def count_total_loc(workspace) -> int:
    return sum(len(rf.code_lines()) for rf in _files(workspace).values())


def safety_report(workspace) -> SafetyReport:
    report = SafetyReport()
    for path, rf in sorted(_files(workspace).items()):
        c = count_file(rf)
        report.per_file[path] = asdict(c)
        report.ptr_decls += c.ptr_decls
        report.ptr_derefs += c.ptr_derefs
        report.unsafe_loc += c.unsafe_loc
        report.total_loc += c.total_loc
    report.pct_unsafe = round_pct(report.unsafe_loc, report.total_loc)
    return report


def raw_pointer_signatures(workspace) -> list[str]:
    """``path:line fn`` for each public fn whose signature mentions a raw pointer."""
    hits = []
    for path, rf in sorted(_files(workspace).items()):
        for fn in rf.functions:
            if fn.is_pub and _RAW_PTR_AHEAD.search(fn.signature):
                hits.append(f"{path}:{fn.line} fn {fn.name}")
    return hits


def unsafe_findings(workspace, limit: int = 50) -> list[str]:
    out = []
    for path, rf in sorted(_files(workspace).items()):
        for s, _e in rf.unsafe_regions:
            out.append(f"{path}:{rf.line(s)} unsafe region")
        for off in rf.raw_pointer_types():
            out.append(f"{path}:{rf.line(off)} raw pointer type")
    return out[:limit]


def is_safe_skeleton(workspace) -> bool:
    """Scaffold gate: no unsafe lines and no raw pointers in public signatures."""
    return count_unsafe_loc(workspace) == 0 and not raw_pointer_signatures(workspace)


def is_safe_project(workspace) -> bool:
    r = safety_report(workspace)
    return r.unsafe_loc == 0 and r.ptr_decls == 0 and r.ptr_derefs == 0


@dataclass
class CoverageReport:
    functional_pct: float = 0.0
    functions_total: int = 0
    functions_implemented: int = 0
    functions_stub: int = 0
    functions_missing: int = 0
    functions_null: int = 0
    test_pct: float = 0.0
    c_tests_total: int = 0
    rust_tests_present: int = 0
    rust_tests_matched: int = 0
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("details")
        return d


def _non_test_functions(c_model: SourceModel) -> list[tuple[str, str]]:
    tests = {tuple(q) for q in c_model.test_functions}
    return [fn.qualified_id for fn in c_model.functions if fn.qualified_id not in tests]


def functional_coverage(c_model: SourceModel, table: MappingTable, workspace,
                        report: CoverageReport | None = None) -> CoverageReport:
    report = report or CoverageReport()
    index = workspace if isinstance(workspace, RustIndex) else RustIndex(workspace)
    status = {}
    counts = {"implemented": 0, "stub": 0, "missing": 0, "null": 0}
    for path, name in _non_test_functions(c_model):
        m = table.lookup(path, name)
        if m is None or isinstance(m, Unresolved):
            verdict = "missing"
        elif m.is_null:
            verdict = "null"
        else:
            result = implementation_check(index.root, m.rust_module, m.rust_function, index)
            if any(f.kind == "missing_function" for f in result.findings):
                verdict = "missing"
            elif result.findings:
                verdict = "stub"
            else:
                verdict = "implemented"
        counts[verdict] += 1
        status[f"{path}::{name}"] = verdict
    report.functions_total = sum(counts.values())
    report.functions_implemented = counts["implemented"]
    report.functions_stub = counts["stub"]
    report.functions_missing = counts["missing"]
    report.functions_null = counts["null"]
    report.functional_pct = round_pct(counts["implemented"], report.functions_total - counts["null"])
    report.details["functions"] = status
    return report


def match_test(c_test: str, rust_tests: list[tuple[str, str]]) -> tuple[str, str] | None:
    """Tier-1 name match of a C test against ``(path, name)`` Rust tests."""
    exact = [t for t in rust_tests if t[1] == c_test]
    if exact:
        return exact[0]
    key = normalize_name(c_test)
    norm = [t for t in rust_tests if normalize_name(t[1]) == key]
    return norm[0] if norm else None


def test_coverage(c_model: SourceModel, workspace, listed_tests: list[str] | None,
                  report: CoverageReport | None = None) -> CoverageReport:
    """Share of C tests with a same-named ``#[test]`` the harness enumerates.

    ``listed_tests`` is the harness's own list (``None`` when it could not
    be obtained, which makes every test non-executable).
    """
    report = report or CoverageReport()
    index = workspace if isinstance(workspace, RustIndex) else RustIndex(workspace)
    rust_tests = [(p, fn.name) for p, fn in index.test_functions()]
    listed_bare = {n.rsplit("::", 1)[-1] for n in (listed_tests or [])}
    matched = present = 0
    status = {}
    for path, name in c_model.test_functions:
        hit = match_test(name, rust_tests)
        if hit is None:
            status[f"{path}::{name}"] = "missing"
            continue
        matched += 1
        if hit[1] in listed_bare:
            present += 1
            status[f"{path}::{name}"] = "present"
        else:
            status[f"{path}::{name}"] = "not_executable"
    report.c_tests_total = len(c_model.test_functions)
    report.rust_tests_matched = matched
    report.rust_tests_present = present
    report.test_pct = round_pct(present, report.c_tests_total)
    report.details["tests"] = status
    return report


def audit(workspace, c_model: SourceModel, table: MappingTable, listed_tests: list[str] | None):
    index = RustIndex(workspace)
    safety = safety_report(index)
    coverage = functional_coverage(c_model, table, index)
    test_coverage(c_model, index, listed_tests, coverage)
    return safety, coverage


LEGEND = ("uLoC counts lines in unsafe blocks and unsafe fn bodies, opener line included; "
          "LoC counts non-blank, non-comment lines of every .rs file.")


def render_table(safety: SafetyReport, name: str = "project") -> str:
    header = f"{'Project':<16}{'ptr_d':>8}{'ptr_*':>8}{'uLoC':>8}{'%Unsafe':>9}{'LoC':>8}"
    row = (f"{name[:15]:<16}{safety.ptr_decls:>8}{safety.ptr_derefs:>8}{safety.unsafe_loc:>8}"
           f"{safety.pct_unsafe:>9.1f}{safety.total_loc:>8}")
    return "\n".join([header, "-" * len(header), row, "", LEGEND])
