"""Per-unit translation loop with checkpointed, ground-truth status.

A unit advances pending -> translated -> impl_checked -> compiled -> done.
The two last transitions demand a passing BuildOutcome, so no agent
transcript can mark a unit complete.  Failed units are rolled back to their
pre-translation files and the loop moves on.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

from . import analyzers
from .agent import BACKEND_ERROR, AgentBackend, PromptLibrary
from .depgraph import TranslationSchedule, TranslationUnit
from .errors import AbortedByBudget, AgentBackendError, BuildFailed, HashMismatch
from .fsutil import atomic_write, restore, snapshot
from .implcheck import MISSING_FUNCTION, CheckResult, Finding, implementation_check
from .mapper import FunctionMapping, MappingTable, Unresolved, map_all, static_search
from .scaffold import AgentSession, compile_repair, plan_modules
from .scanner import SourceModel
from .toolchain import BuildOutcome, TestOutcome, Toolchain

log = logging.getLogger(__name__)

STATE_VERSION = 1

PENDING = "pending"
TRANSLATED = "translated"
IMPL_CHECKED = "impl_checked"
COMPILED = "compiled"
DONE = "done"
SKIPPED_NULL = "skipped_null"
FAILED = "failed"

_RANK = {PENDING: 0, TRANSLATED: 1, IMPL_CHECKED: 2, COMPILED: 3, DONE: 4}
TERMINAL = frozenset({DONE, SKIPPED_NULL, FAILED})

MODES = ("full", "base", "no_interfaces", "no_mapping")


def normalize_mode(mode: str) -> str:
    mode = mode.replace("-", "_")
    aliases = {"w/o_interfaces": "no_interfaces", "w/o_mapping": "no_mapping"}
    mode = aliases.get(mode, mode)
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")
    return mode


@dataclass
class UnitStatus:
    unit_id: int
    phase: str = PENDING
    attempts_translate: int = 0
    attempts_compile_repair: int = 0
    last_error: str | None = None

    @property
    def terminal(self) -> bool:
        return self.phase in TERMINAL


class TransitionError(RuntimeError):
    pass


def advance(status: UnitStatus, phase: str, build: BuildOutcome | None = None) -> None:
    """Move ``status`` forward; compiled and done need a passing build."""
    if status.terminal:
        raise TransitionError(f"unit {status.unit_id} is already {status.phase}")
    if phase == FAILED:
        status.phase = FAILED
        return
    if phase == SKIPPED_NULL:
        if status.phase != PENDING:
            raise TransitionError("skipped_null only applies to pending units")
        status.phase = SKIPPED_NULL
        return
    if _RANK[phase] < _RANK[status.phase]:
        raise TransitionError(f"unit {status.unit_id}: {status.phase} -> {phase} regresses")
    if phase in (COMPILED, DONE) and not (isinstance(build, BuildOutcome) and build.ok):
        raise TransitionError(f"unit {status.unit_id}: {phase} requires a passing toolchain check")
    status.phase = phase


@dataclass
class PipelineState:
    schedule_hash: str
    mapping_hash: str
    unit_statuses: list[UnitStatus]
    global_phase: str = "translating"
    mode: str = "full"

    def to_dict(self) -> dict:
        return {
            "state_version": STATE_VERSION,
            "schedule_hash": self.schedule_hash,
            "mapping_hash": self.mapping_hash,
            "mode": self.mode,
            "global_phase": self.global_phase,
            "unit_statuses": [asdict(s) for s in self.unit_statuses],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineState":
        if d.get("state_version") != STATE_VERSION:
            raise HashMismatch(f"unsupported state_version {d.get('state_version')!r}")
        return cls(d["schedule_hash"], d["mapping_hash"], [UnitStatus(**s) for s in d["unit_statuses"]],
                   d.get("global_phase", "translating"), d.get("mode", "full"))

    def status(self, unit_id: int) -> UnitStatus:
        return self.unit_statuses[unit_id]


def checkpoint(state: PipelineState, path) -> None:
    atomic_write(path, json.dumps(state.to_dict(), indent=2) + "\n")


def resume(path, schedule_hash: str, mapping_hash: str) -> PipelineState | None:
    """Saved state for these artifacts, or None when no state file exists."""
    path = Path(path)
    if not path.is_file():
        return None
    state = PipelineState.from_dict(json.loads(path.read_text(encoding="utf-8")))
    if state.schedule_hash != schedule_hash or state.mapping_hash != mapping_hash:
        raise HashMismatch(f"{path} was written for a different schedule or mapping table")
    return state


@dataclass
class OrchestratorConfig:
    translate_retries: int = 3
    max_repair_attempts: int = 5
    refactor_rounds: int = 1
    verify_retries: int = 3
    agent_timeout: float = 900.0
    max_agent_calls: int | None = None
    budget_secs: float | None = None
    mode: str = "full"


def _c_source(model: SourceModel, unit: TranslationUnit) -> str:
    parts = []
    for qid in unit.members:
        fn = model.function(qid)
        parts.append(f"// {fn.path}:{fn.body_span[0]}\n{fn.body_text}")
    return "\n\n".join(parts)


class Orchestrator:
    def __init__(self, schedule: TranslationSchedule, table: MappingTable, c_model: SourceModel,
                 c_root, workspace, agent: AgentBackend, toolchain: Toolchain,
                 cfg: OrchestratorConfig | None = None, prompts: PromptLibrary | None = None,
                 state_path=None, on_checkpoint: Callable[[PipelineState], None] | None = None):
        self.schedule = schedule
        self.table = table
        self.model = c_model
        self.c_root = Path(c_root)
        self.workspace = Path(workspace)
        self.agent = agent
        self.toolchain = toolchain
        self.cfg = cfg or OrchestratorConfig()
        self.cfg.mode = normalize_mode(self.cfg.mode)
        self.prompts = prompts or PromptLibrary()
        self.session = AgentSession(agent, self.prompts, self.c_root, self.workspace, self.cfg.agent_timeout)
        self.state_path = Path(state_path) if state_path else self.workspace.with_name(self.workspace.name + ".state.json")
        self.on_checkpoint = on_checkpoint
        self.state: PipelineState | None = None
        self._started = time.monotonic()
        self._calls_at_start = agent.count()

    # --- state -------------------------------------------------------------------

    def _fresh_state(self) -> PipelineState:
        return PipelineState(self.schedule.content_hash(), self.table.content_hash(),
                             [UnitStatus(u.unit_id) for u in self.schedule.units], mode=self.cfg.mode)

    def load_state(self, resume_run: bool) -> PipelineState:
        state = None
        if resume_run:
            state = resume(self.state_path, self.schedule.content_hash(), self.table.content_hash())
        self.state = state or self._fresh_state()
        return self.state

    def save(self) -> None:
        checkpoint(self.state, self.state_path)
        if self.on_checkpoint is not None:
            self.on_checkpoint(self.state)

    def _budget(self) -> None:
        used = self.agent.count() - self._calls_at_start
        if self.cfg.max_agent_calls is not None and used >= self.cfg.max_agent_calls:
            raise AbortedByBudget(f"agent call budget of {self.cfg.max_agent_calls} exhausted")
        if self.cfg.budget_secs is not None and time.monotonic() - self._started > self.cfg.budget_secs:
            raise AbortedByBudget(f"time budget of {self.cfg.budget_secs}s exhausted")

    def _ask(self, role, template, attempt=0, /, **values):
        self._budget()
        return self.session.ask(role, template, attempt, **values)

    # --- unit translation -------------------------------------------------------------

    def _targets(self, unit: TranslationUnit) -> list[tuple[str, str, tuple[str, str] | None]]:
        """(c_path, c_name, (rust_module, rust_function) | None) per member."""
        out = []
        for path, name in unit.members:
            m = self.table.lookup(path, name)
            target = m.target if isinstance(m, FunctionMapping) else None
            out.append((path, name, target))
        return out

    def _locate(self, name: str) -> tuple[str, str] | None:
        hit, _ = static_search(name, self.workspace)
        return (hit[0], hit[1]) if hit else None

    def _check_impl(self, unit: TranslationUnit) -> CheckResult:
        result = CheckResult()
        for path, name, target in self._targets(unit):
            entry = self.table.lookup(path, name)
            if isinstance(entry, FunctionMapping) and entry.is_null:
                continue
            if self.cfg.mode != "full":
                target = self._locate(name)
            if target is None:
                result.findings.append(Finding(MISSING_FUNCTION, f"no unique fn {name} in the crate"))
                continue
            result.findings.extend(implementation_check(self.workspace, target[0], target[1]).findings)
        return result

    def _target_text(self, unit: TranslationUnit) -> str:
        lines = []
        plan = plan_modules(self.model)
        for path, name, target in self._targets(unit):
            lines.append(f"C FUNCTION: {path}::{name}")
            if self.cfg.mode == "full" and target is not None:
                lines.append(f"TARGET: {target[0]}::{target[1]}")
            elif self.cfg.mode == "no_interfaces":
                lines.append(f"Create it as `pub fn {name}` in {plan.module_for(path)} (declare the module in src/lib.rs).")
            else:
                lines.append("Find the existing Rust stub for this function in the crate and implement it.")
        return "\n".join(lines) + "\n"

    def _fail(self, status: UnitStatus, error: str, snap) -> UnitStatus:
        restore(self.workspace, snap)
        status.last_error = error
        advance(status, FAILED)
        self.save()
        return status

    def translate_unit(self, unit: TranslationUnit) -> UnitStatus:
        status = self.state.status(unit.unit_id)
        for prior in self.schedule.units[:unit.unit_id]:
            if not self.state.status(prior.unit_id).terminal:
                raise RuntimeError(f"unit {unit.unit_id} started before unit {prior.unit_id} finished")
        if status.terminal:
            return status
        entries = [self.table.lookup(p, n) for p, n in unit.members]
        if self.cfg.mode == "full":
            if any(e is None or isinstance(e, Unresolved) for e in entries):
                reasons = ", ".join(f"{e.c_function}: {e.reason}" for e in entries if isinstance(e, Unresolved))
                status.last_error = f"unresolved mapping ({reasons or 'absent'})"
                advance(status, FAILED)
                self.save()
                return status
            if all(e.is_null for e in entries):
                advance(status, SKIPPED_NULL)
                self.save()
                return status

        snap = snapshot(self.workspace)
        feedback = ""
        while status.phase in (PENDING, TRANSLATED):
            if status.attempts_translate >= self.cfg.translate_retries:
                return self._fail(status, status.last_error or "translation attempts exhausted", snap)
            result = self._ask("translate", "translate_function.txt", attempt=status.attempts_translate,
                               targets=self._target_text(unit), c_source=_c_source(self.model, unit),
                               feedback=feedback)
            status.attempts_translate += 1
            if result.status == BACKEND_ERROR:
                status.last_error = "agent backend error"
                self.save()
                continue
            if status.phase == PENDING:
                advance(status, TRANSLATED)
            check = self._check_impl(unit)
            if check.implemented:
                status.last_error = None
                advance(status, IMPL_CHECKED)
            else:
                status.last_error = check.summary()
                feedback = f"\nThe previous attempt was rejected by the implementation checker: {check.summary()}\n"
            self.save()

        if status.phase == IMPL_CHECKED:
            try:
                repair = compile_repair(self.workspace, self.session, self.toolchain, self.cfg.max_repair_attempts,
                                        f"after translating unit {unit.unit_id}")
            except AgentBackendError as exc:
                return self._fail(status, str(exc), snap)
            status.attempts_compile_repair += repair.repairs
            if not repair.ok:
                return self._fail(status, "compile repair exhausted: " + repair.build.error_text(5), snap)
            recheck = self._check_impl(unit)
            if not recheck.implemented:
                return self._fail(status, "stub reintroduced during repair: " + recheck.summary(), snap)
            # the repair loop's verdict is confirmed by a fresh check
            confirm = self.toolchain.check(self.workspace, all_targets=True)
            if not confirm.ok:
                return self._fail(status, "independent check failed", snap)
            advance(status, COMPILED, confirm)
            self.save()
        if status.phase == COMPILED:
            confirm = self.toolchain.check(self.workspace, all_targets=True)
            if not confirm.ok:
                return self._fail(status, "independent check failed", snap)
            advance(status, DONE, confirm)
            self.save()
        return status

    # --- project passes -------------------------------------------------------------

    def refactor_pass(self) -> None:
        rounds = 0
        while rounds < self.cfg.refactor_rounds and not analyzers.is_safe_project(self.workspace):
            snap = snapshot(self.workspace)
            result = self._ask("refactor", "refactor_safety.txt", attempt=rounds, scope="whole crate",
                               findings="\n".join(analyzers.unsafe_findings(self.workspace)))
            rounds += 1
            if result.status == BACKEND_ERROR:
                restore(self.workspace, snap)
                continue
            try:
                repair = compile_repair(self.workspace, self.session, self.toolchain, self.cfg.max_repair_attempts,
                                        "after the safety refactor")
            except AgentBackendError:
                repair = None
            if repair is None or not repair.ok:
                restore(self.workspace, snap)

    def _run_tests(self) -> TestOutcome:
        try:
            return self.toolchain.run_tests(self.workspace)
        except BuildFailed as exc:
            return TestOutcome(False, raw_output=exc.raw_output, diagnostics=["test build failed"],
                               failed_names=["<build>"])

    def verify_pass(self) -> None:
        if self.cfg.mode == "no_interfaces":
            self._translate_tests()
        for attempt in range(self.cfg.verify_retries):
            outcome = self._run_tests()
            if outcome.ok:
                return
            snap = snapshot(self.workspace)
            result = self._ask("verify", "verify_tests.txt", attempt=attempt, attempt_no=attempt + 1,
                               max_attempts=self.cfg.verify_retries,
                               failing="\n".join(outcome.failed_names) or "\n".join(outcome.diagnostics),
                               c_tests="")
            if result.status == BACKEND_ERROR:
                restore(self.workspace, snap)
                continue
            try:
                repair = compile_repair(self.workspace, self.session, self.toolchain, self.cfg.max_repair_attempts,
                                        "after test repair")
            except AgentBackendError:
                repair = None
            if repair is None or not repair.ok:
                restore(self.workspace, snap)

    def _translate_tests(self) -> None:
        names = "\n".join(f"C TEST: {p}::{n}" for p, n in self.model.test_functions)
        sources = "\n\n".join(self.model.function(q).body_text for q in self.model.test_functions)
        snap = snapshot(self.workspace)
        result = self._ask("verify", "verify_tests.txt", attempt_no=1, max_attempts=1, failing="(none yet)",
                           c_tests=f"\nTranslate these C tests into Rust #[test] functions first:\n{names}\n\n{sources}\n")
        if result.status == BACKEND_ERROR:
            restore(self.workspace, snap)
            return
        repair = compile_repair(self.workspace, self.session, self.toolchain, self.cfg.max_repair_attempts,
                                "after test translation")
        if not repair.ok:
            restore(self.workspace, snap)

    # --- driver ---------------------------------------------------------------------

    def run(self, resume_run: bool = False) -> dict:
        self.load_state(resume_run)
        try:
            if self.state.global_phase == "translating":
                for unit in self.schedule.units:
                    self.translate_unit(unit)
                self.state.global_phase = "refactoring"
                self.save()
            if self.state.global_phase == "refactoring":
                self.refactor_pass()
                self.state.global_phase = "verifying"
                self.save()
            if self.state.global_phase == "verifying":
                self.verify_pass()
                self.state.global_phase = "done"
                self.save()
        except AbortedByBudget as exc:
            exc.report = self.report()
            raise
        return self.report()

    def report(self) -> dict:
        table = self.table
        if self.cfg.mode != "full":
            table = coverage_table(self.model, self.schedule, self.c_root, self.workspace)
        return build_report(self.workspace, self.model, table, self.toolchain, self.cfg.mode, self.state)


def coverage_table(c_model: SourceModel, schedule: TranslationSchedule, c_root, workspace) -> MappingTable:
    """Tier-1-only table for modes that never build one; never calls an agent."""
    return map_all(schedule, c_model, c_root, workspace, agent=None, use_agent=False)


def build_report(workspace, c_model: SourceModel, table: MappingTable, toolchain: Toolchain, mode: str,
                 state: PipelineState | None) -> dict:
    workspace = Path(workspace)
    build = toolchain.check(workspace)
    try:
        tests = toolchain.run_tests(workspace)
    except BuildFailed as exc:
        tests = TestOutcome(False, raw_output=exc.raw_output, diagnostics=["test build failed"])
    listed = toolchain.list_tests(workspace) if build.ok else []
    safety, coverage = analyzers.audit(workspace, c_model, table, listed)
    return {
        "mode": mode,
        "build": build.to_dict(),
        "tests": tests.to_dict(),
        "safety": safety.to_dict(),
        "coverage": coverage.to_dict(),
        "units": [asdict(s) for s in state.unit_statuses] if state else [],
        "global_phase": state.global_phase if state else "done",
    }
