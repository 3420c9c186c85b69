"""Staged construction of a compilable Rust skeleton.

Stages run in a fixed order: init, types, signatures, safety, tests,
final_verify.  The items each stage hands to the agent are enumerated from
the SourceModel, so every loop is bounded.  Whether a stage succeeded is
decided by the toolchain and the safety analyzer, never by the agent.
"""

from __future__ import annotations

import logging
import posixpath
import re
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import analyzers
from .agent import BACKEND_ERROR, TIMED_OUT, AgentBackend, AgentRequest, PromptLibrary
from .depgraph import TranslationSchedule
from .errors import AgentBackendError, PathOccupied, StageExhausted, ValidationError
from .fsutil import copy_tree
from .mapper import static_search
from .rustscan import RustIndex
from .scanner import C_SOURCE, HEADER, ScanConfig, SourceModel, is_test_path
from .toolchain import BuildOutcome, Toolchain

log = logging.getLogger(__name__)

STAGES = ("init", "types", "signatures", "safety", "tests", "final_verify")

OK = "ok"
TIMED_OUT_OUTCOME = "timed_out"
EXHAUSTED = "exhausted"

RUST_KEYWORDS = frozenset(
    """as break const continue crate else enum extern false fn for if impl in let loop match mod
    move mut pub ref return self Self static struct super trait true type unsafe use where while
    async await dyn abstract become box do final macro override priv typeof unsized virtual yield try
    gen""".split()
)


@dataclass
class ScaffoldConfig:
    max_repair_attempts: int = 5
    max_refactor_attempts: int = 3
    stage_timeout: float = 900.0

    def validate(self, prefix: str = "scaffold") -> "ScaffoldConfig":
        if not isinstance(self.max_repair_attempts, int) or self.max_repair_attempts < 1:
            raise ValidationError(f"{prefix}.max_repair_attempts", "must be an integer >= 1")
        if not isinstance(self.max_refactor_attempts, int) or self.max_refactor_attempts < 0:
            raise ValidationError(f"{prefix}.max_refactor_attempts", "must be an integer >= 0")
        if not self.stage_timeout > 0:
            raise ValidationError(f"{prefix}.stage_timeout", "must be > 0")
        return self


@dataclass
class StageRecord:
    stage: str
    attempts: int
    outcome: str
    agent_calls: int = 0
    repairs: int = 0


@dataclass
class SkeletonReport:
    stage_log: list[StageRecord] = field(default_factory=list)
    module_manifest: list[tuple[str, str]] = field(default_factory=list)
    stub_count: int = 0
    compilable: bool = False
    missing_stubs: list[str] = field(default_factory=list)
    expert_interfaces: bool = False

    def to_dict(self) -> dict:
        return {
            "stage_log": [asdict(s) for s in self.stage_log],
            "module_manifest": [{"c_file": c, "target_module": r} for c, r in self.module_manifest],
            "stub_count": self.stub_count,
            "compilable": self.compilable,
            "missing_stubs": list(self.missing_stubs),
            "expert_interfaces": self.expert_interfaces,
        }


# --- module layout -------------------------------------------------------------


def rust_ident(stem: str) -> str:
    ident = re.sub(r"[^A-Za-z0-9_]", "_", stem).lower() or "module"
    if ident[0].isdigit():
        ident = "m_" + ident
    if ident in RUST_KEYWORDS or ident in ("lib", "main"):
        ident = ident + "_mod"
    return ident


def _has_non_declarations(model: SourceModel, path: str) -> bool:
    if any(fn.path == path for fn in model.functions):
        return True
    return any(t.path == path and t.kind == "global" for t in model.type_items)


@dataclass
class ModulePlan:
    """C file -> Rust module path, plus the ``lib.rs`` declarations."""

    manifest: dict[str, str]
    modules: list[str]
    test_modules: set[str]

    def module_for(self, c_path: str) -> str:
        return self.manifest[c_path]

    def lib_rs(self) -> str:
        lines = []
        for mod in self.modules:
            prefix = "#[cfg(test)]\nmod" if mod in self.test_modules else "pub mod"
            lines.append(f"{prefix} {mod};")
        return "\n".join(lines) + "\n"


def plan_modules(model: SourceModel, scan_config: ScanConfig | None = None) -> ModulePlan:
    scan_config = scan_config or ScanConfig()
    kinds = {f.path: f.kind for f in model.files}
    taken: dict[str, str] = {}
    manifest: dict[str, str] = {}
    tests: set[str] = set()

    def claim(c_path: str, stem: str) -> str:
        name = rust_ident(posixpath.basename(stem))
        if name in taken and taken[name] != c_path:
            name = rust_ident(stem.replace("/", "_"))
        while name in taken and taken[name] != c_path:
            name += "_"
        taken[name] = c_path
        return name

    c_stems = {posixpath.splitext(p)[0]: p for p, k in kinds.items() if k == C_SOURCE}
    for path in sorted(p for p, k in kinds.items() if k == C_SOURCE):
        name = claim(path, posixpath.splitext(path)[0])
        manifest[path] = f"src/{name}.rs"
        if is_test_path(path, scan_config):
            tests.add(name)
    includers: dict[str, set[str]] = {}
    for e in model.includes:
        if kinds[e.from_path] == C_SOURCE:
            includers.setdefault(e.to_path, set()).add(e.from_path)
    for path in sorted(p for p, k in kinds.items() if k == HEADER):
        stem = posixpath.splitext(path)[0]
        if _has_non_declarations(model, path):
            name = claim(path, stem + "_h")
            manifest[path] = f"src/{name}.rs"
            if is_test_path(path, scan_config):
                tests.add(name)
        elif stem in c_stems:
            manifest[path] = manifest[c_stems[stem]]
        elif len(includers.get(path, ())) == 1:
            manifest[path] = manifest[next(iter(includers[path]))]
        else:
            name = claim(path, stem)
            manifest[path] = f"src/{name}.rs"
    modules = sorted({posixpath.splitext(posixpath.basename(m))[0] for m in manifest.values()},
                     key=lambda m: (m in tests, m))
    return ModulePlan(manifest, modules, tests)


# --- repair loops ----------------------------------------------------------------


@dataclass
class RepairOutcome:
    ok: bool
    attempts: int
    repairs: int
    build: BuildOutcome | None = None


class AgentSession:
    """Binds agent, prompts and workspace paths for one pipeline run."""

    def __init__(self, agent: AgentBackend, prompts: PromptLibrary, c_root, target_root, timeout: float):
        self.agent = agent
        self.prompts = prompts
        self.c_root = str(c_root)
        self.target_root = str(target_root)
        self.timeout = timeout

    def ask(self, role: str, template: str, attempt: int = 0, /, **values):
        values.setdefault("c_root", self.c_root)
        values.setdefault("target_root", self.target_root)
        prompt = self.prompts.render(template, **values)
        return self.agent.invoke(AgentRequest(role, prompt, [self.c_root, self.target_root], self.timeout, attempt))


def compile_repair(workspace, session: AgentSession, toolchain: Toolchain, max_attempts: int,
                   context: str = "", verify=None) -> RepairOutcome:
    """Check, and while the check fails ask for a repair, at most ``max_attempts`` times.

    ``verify`` replaces the default all-targets type check.
    """
    verify = verify or (lambda: toolchain.check(workspace, all_targets=True))
    repairs = 0
    while True:
        build = verify()
        if build.ok:
            return RepairOutcome(True, repairs + 1, repairs, build)
        if repairs >= max_attempts:
            return RepairOutcome(False, repairs + 1, repairs, build)
        result = session.ask(
            "compile_repair", "compile_repair.txt", attempt=repairs,
            errors=build.error_text(), context=context or "general", attempt_no=repairs + 1,
            max_attempts=max_attempts, check_command=" ".join(toolchain.check_cmd),
        )
        repairs += 1
        if result.status == BACKEND_ERROR:
            raise AgentBackendError(f"compile_repair: {result.transcript[-500:]}")


def verify_repair(workspace, session: AgentSession, toolchain: Toolchain, max_attempts: int) -> RepairOutcome:
    """Like compile_repair, but the verdict also requires the test harness to build and link."""

    def verdict():
        build = toolchain.check(workspace, all_targets=True)
        if not build.ok:
            return build
        return toolchain.build_tests(workspace)

    return compile_repair(workspace, session, toolchain, max_attempts, "final verification", verdict)


# --- the scaffold driver -------------------------------------------------------------


class _Stage:
    def __init__(self, name: str, cfg: ScaffoldConfig):
        self.name = name
        self.deadline = time.monotonic() + cfg.stage_timeout
        self.calls = 0
        self.timed_out = False

    def expired(self) -> bool:
        if time.monotonic() > self.deadline:
            self.timed_out = True
        return self.timed_out


def _check_result(stage: _Stage, result) -> None:
    stage.calls += 1
    if result.status == BACKEND_ERROR:
        raise AgentBackendError(f"{stage.name}: agent backend error: {result.transcript[-500:]}")
    if result.status == TIMED_OUT:
        stage.timed_out = True


def _c_excerpt(model: SourceModel, path: str, span) -> str:
    lines = model.file(path).text.split("\n")
    return "\n".join(lines[span[0] - 1:span[1]])


class Scaffolder:
    def __init__(self, model: SourceModel, schedule: TranslationSchedule, c_root, target_root,
                 agent: AgentBackend, toolchain: Toolchain, cfg: ScaffoldConfig | None = None,
                 prompts: PromptLibrary | None = None, scan_config: ScanConfig | None = None):
        self.model = model
        self.schedule = schedule
        self.c_root = Path(c_root)
        self.target_root = Path(target_root)
        self.toolchain = toolchain
        self.cfg = (cfg or ScaffoldConfig()).validate()
        self.prompts = prompts or PromptLibrary()
        self.session = AgentSession(agent, self.prompts, self.c_root, self.target_root, self.cfg.stage_timeout)
        self.plan = plan_modules(model, scan_config)
        self.report = SkeletonReport(module_manifest=sorted(self.plan.manifest.items()))

    # each stage returns None; failures raise StageExhausted

    def _preamble(self) -> str:
        manifest = "\n".join(f"  {c} -> {r}" for c, r in sorted(self.plan.manifest.items()))
        return self.prompts.render("scaffold_init.txt", c_root=self.c_root, target_root=self.target_root,
                                   module_manifest=manifest)

    def _finish(self, stage: _Stage, outcome: str | None = None, verify: bool = False) -> None:
        if verify:
            repair = verify_repair(self.target_root, self.session, self.toolchain, self.cfg.max_repair_attempts)
        else:
            repair = compile_repair(self.target_root, self.session, self.toolchain, self.cfg.max_repair_attempts,
                                    f"after stage {stage.name}")
        if outcome is None:
            outcome = TIMED_OUT_OUTCOME if stage.timed_out else OK
        if not repair.ok:
            outcome = EXHAUSTED
        self.report.stage_log.append(StageRecord(stage.name, repair.attempts, outcome, stage.calls + repair.repairs,
                                                 repair.repairs))
        if not repair.ok:
            self.report.compilable = False
            raise StageExhausted(f"stage {stage.name}: still not compilable after {repair.repairs} repairs",
                                 self.report)

    def stage_init(self) -> None:
        stage = _Stage("init", self.cfg)
        self.toolchain.init_project(self.target_root, self.c_root.resolve().name)
        src = self.target_root / "src"
        for c_path, module in sorted(self.plan.manifest.items()):
            dest = self.target_root / module
            if not dest.exists():
                dest.write_text("", encoding="utf-8")
            with open(dest, "a", encoding="utf-8") as fh:
                fh.write(f"//! Translated from `{c_path}`.\n")
        (src / "lib.rs").write_text(self.plan.lib_rs(), encoding="utf-8")
        self.prompts.install_agents_md(self.target_root)
        self._finish(stage)

    def stage_types(self) -> None:
        stage = _Stage("types", self.cfg)
        preamble = self._preamble()
        for item in self.model.type_items:
            if stage.expired():
                break
            result = self.session.ask(
                "scaffold", "scaffold_types.txt", preamble=preamble, c_path=item.path, item_name=item.name,
                item_kind=item.kind, target_module=self.plan.module_for(item.path), item_text=item.text,
            )
            _check_result(stage, result)
        self._finish(stage)

    def stage_signatures(self) -> None:
        stage = _Stage("signatures", self.cfg)
        preamble = self._preamble()
        for unit in self.schedule.units:
            for path, name in unit.members:
                if stage.expired():
                    break
                fn = self.model.function((path, name))
                result = self.session.ask(
                    "scaffold", "scaffold_signature.txt", preamble=preamble, c_path=path, name=name,
                    target_module=self.plan.module_for(path), c_source=fn.body_text,
                )
                _check_result(stage, result)
        self._finish(stage)
        self._count_stubs()

    def _count_stubs(self) -> None:
        index = RustIndex(self.target_root)
        count = 0
        missing = []
        for path, name in self.schedule.functions():
            hit, _reason = static_search(name, index)
            if hit is not None and hit[2] == "static_exact":
                count += 1
            else:
                missing.append(f"{path}::{name}")
        self.report.stub_count = count
        self.report.missing_stubs = missing

    def stage_safety(self) -> None:
        stage = _Stage("safety", self.cfg)
        k = 0
        while not analyzers.is_safe_skeleton(self.target_root) and k < self.cfg.max_refactor_attempts:
            if stage.expired():
                break
            findings = analyzers.raw_pointer_signatures(self.target_root) + analyzers.unsafe_findings(self.target_root)
            result = self.session.ask("refactor", "refactor_safety.txt", attempt=k, scope="skeleton interfaces",
                                      findings="\n".join(findings))
            _check_result(stage, result)
            k += 1
        if stage.timed_out:
            outcome = TIMED_OUT_OUTCOME
        else:
            outcome = OK if analyzers.is_safe_skeleton(self.target_root) else EXHAUSTED
        # an unsafe skeleton is reported, not fatal; only compilability aborts
        self._finish(stage, outcome)

    def stage_tests(self) -> None:
        stage = _Stage("tests", self.cfg)
        preamble = self._preamble()
        index = RustIndex(self.target_root)
        rust_tests = [(p, fn.name) for p, fn in index.test_functions()]
        for path, name in self.model.test_functions:
            if analyzers.match_test(name, rust_tests) is not None:
                continue
            if stage.expired():
                break
            fn = self.model.function((path, name))
            result = self.session.ask(
                "scaffold", "scaffold_tests.txt", preamble=preamble, c_path=path, name=name,
                target_module=self.plan.module_for(path), c_source=fn.body_text,
            )
            _check_result(stage, result)
        self._finish(stage)

    def stage_final_verify(self) -> None:
        stage = _Stage("final_verify", self.cfg)
        self._finish(stage, verify=True)
        self.report.compilable = True

    def import_interfaces(self, interfaces_dir) -> None:
        if self.target_root.exists() and any(self.target_root.iterdir()):
            raise PathOccupied(f"{self.target_root} is not empty")
        if self.target_root.exists():
            self.target_root.rmdir()
        copy_tree(interfaces_dir, self.target_root)
        self.toolchain.ensure_lockfile(self.target_root)
        if not (self.target_root / "AGENTS.md").exists():
            self.prompts.install_agents_md(self.target_root)
        self.report.expert_interfaces = True

    def run(self, interfaces_dir=None) -> SkeletonReport:
        if interfaces_dir is not None:
            self.import_interfaces(interfaces_dir)
        else:
            if self.target_root.exists() and any(self.target_root.iterdir()):
                raise PathOccupied(f"{self.target_root} is not empty")
            self.stage_init()
            self.stage_types()
            self.stage_signatures()
            self.stage_safety()
        self.stage_tests()
        self.stage_final_verify()
        return self.report


def scaffold(c_model: SourceModel, schedule: TranslationSchedule, c_root, target_root, agent: AgentBackend,
             toolchain: Toolchain, cfg: ScaffoldConfig | None = None, prompts: PromptLibrary | None = None,
             interfaces_dir=None, scan_config: ScanConfig | None = None) -> SkeletonReport:
    return Scaffolder(c_model, schedule, c_root, target_root, agent, toolchain, cfg, prompts, scan_config).run(
        interfaces_dir)


def safety_gate(workspace) -> bool:
    return analyzers.is_safe_skeleton(workspace)
