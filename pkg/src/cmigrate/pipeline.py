"""End-to-end driver: analyze, scaffold or import, map, translate, audit."""

from __future__ import annotations

import logging
import shlex
from dataclasses import dataclass, field
from pathlib import Path

from .agent import AgentBackend, MockBackend, PromptLibrary, SubprocessBackend
from .config import PipelineConfig
from .depgraph import TranslationSchedule, build_schedule
from .errors import AbortedByBudget, PipelineError, StageExhausted, ValidationError
from .mapper import MapperConfig, MappingTable, map_all
from .orchestrator import Orchestrator, OrchestratorConfig, build_report, coverage_table
from .scaffold import AgentSession, ScaffoldConfig, Scaffolder
from .scanner import SourceModel, scan_repository
from .toolchain import Toolchain

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_BUILD = 2
EXIT_TESTS = 3
EXIT_ABORT = 4


@dataclass
class PipelineResult:
    exit_code: int
    report: dict = field(default_factory=dict)
    stage: str | None = None
    error: str | None = None


def make_agent(cfg: PipelineConfig) -> AgentBackend:
    if cfg.agent.mock_script:
        return MockBackend.load(cfg.agent.mock_script)
    if cfg.agent.command:
        command = cfg.agent.command
        if len(command) == 1 and " " in command[0]:
            command = shlex.split(command[0])
        return SubprocessBackend(command)
    raise ValidationError("agent.command", "no agent configured (set agent.command or agent.mock_script)")


def make_toolchain(cfg: PipelineConfig) -> Toolchain:
    t = cfg.toolchain
    return Toolchain(t.check_cmd, t.test_cmd, t.target_dir, cfg.orchestrator.test_timeout_secs, t.check_timeout_secs)


def orchestrator_config(cfg: PipelineConfig) -> OrchestratorConfig:
    o = cfg.orchestrator
    return OrchestratorConfig(
        translate_retries=o.translate_retries,
        max_repair_attempts=cfg.scaffold.max_repair_attempts,
        refactor_rounds=o.refactor_rounds,
        verify_retries=o.verify_retries,
        agent_timeout=cfg.agent.timeout_secs,
        max_agent_calls=o.max_agent_calls,
        mode=cfg.mode,
    )


def analyze(c_root, cfg: PipelineConfig) -> tuple[SourceModel, TranslationSchedule]:
    model = scan_repository(c_root, cfg.scan)
    return model, build_schedule(model, cfg.scan)


def exit_code_for(report: dict) -> int:
    if not report.get("build", {}).get("ok"):
        return EXIT_BUILD
    if not report.get("tests", {}).get("ok"):
        return EXIT_TESTS
    return EXIT_OK


def _base_mode(model, schedule, c_root, workspace, agent, toolchain, cfg, prompts) -> dict:
    toolchain.init_project(workspace, Path(c_root).resolve().name)
    prompts.install_agents_md(workspace)
    session = AgentSession(agent, prompts, c_root, workspace, cfg.agent.timeout_secs)
    session.ask("translate", "translate_project.txt")
    table = coverage_table(model, schedule, c_root, workspace)
    return build_report(workspace, model, table, toolchain, "base", None)


def run_pipeline(cfg: PipelineConfig, c_root, workspace, agent: AgentBackend | None = None,
                 toolchain: Toolchain | None = None, state_path=None, resume: bool = False,
                 on_checkpoint=None) -> PipelineResult:
    c_root, workspace = Path(c_root), Path(workspace)
    prompts = PromptLibrary(cfg.agent.prompt_dir)
    stage = "analyze"
    report: dict = {}
    try:
        toolchain = toolchain or make_toolchain(cfg)
        toolchain.require()
        agent = agent or make_agent(cfg)
        model, schedule = analyze(c_root, cfg)

        if cfg.mode == "base":
            stage = "translate"
            report = _base_mode(model, schedule, c_root, workspace, agent, toolchain, cfg, prompts)
            return PipelineResult(exit_code_for(report), report)

        skeleton = None
        if cfg.mode in ("full", "no_mapping") and not (resume and workspace.exists()):
            stage = "scaffold"
            scfg = ScaffoldConfig(cfg.scaffold.max_repair_attempts, cfg.scaffold.max_refactor_attempts,
                                  cfg.scaffold.stage_timeout)
            scaffolder = Scaffolder(model, schedule, c_root, workspace, agent, toolchain, scfg, prompts, cfg.scan)
            skeleton = scaffolder.run(cfg.interfaces)
        elif cfg.mode == "no_interfaces" and not (resume and workspace.exists()):
            stage = "scaffold"
            toolchain.init_project(workspace, c_root.resolve().name)
            prompts.install_agents_md(workspace)

        table = MappingTable()
        if cfg.mode == "full":
            stage = "map"
            table = map_all(schedule, model, c_root, workspace, agent, prompts,
                            MapperConfig(cfg.mapper.max_attempts, cfg.agent.timeout_secs))

        stage = "translate"
        orch = Orchestrator(schedule, table, model, c_root, workspace, agent, toolchain,
                            orchestrator_config(cfg), prompts, state_path, on_checkpoint)
        report = orch.run(resume_run=resume)
        if skeleton is not None:
            report["scaffold"] = skeleton.to_dict()
        return PipelineResult(exit_code_for(report), report)
    except AbortedByBudget as exc:
        return PipelineResult(EXIT_ABORT, exc.report or report, stage, str(exc))
    except StageExhausted as exc:
        partial = {"scaffold": exc.report.to_dict()} if exc.report is not None else {}
        return PipelineResult(EXIT_ABORT, partial, stage, str(exc))
    except PipelineError as exc:
        kind = "backend_error" if "backend" in type(exc).__name__.lower() else type(exc).__name__
        return PipelineResult(EXIT_ABORT, report, stage, f"{kind}: {exc}")
