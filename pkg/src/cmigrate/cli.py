"""Command-line entry point: ``cmigrate <subcommand> ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 build failure,
3 test failure, 4 pipeline abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import analyzers
from .agent import PromptLibrary
from .config import PipelineConfig, load_config
from .depgraph import TranslationSchedule
from .errors import PipelineError, StageExhausted, ValidationError
from .mapper import MapperConfig, MappingTable, map_all
from .orchestrator import Orchestrator, coverage_table
from .pipeline import (EXIT_ABORT, EXIT_BUILD, EXIT_OK, analyze, exit_code_for, make_agent, make_toolchain,
                       orchestrator_config, run_pipeline)
from .report import render_text, write_figures
from .scaffold import Scaffolder

log = logging.getLogger("cmigrate")

EXIT_USAGE = 1


def _common(parser: argparse.ArgumentParser, suppress: bool) -> None:
    # subcommand copies suppress their defaults so they never clobber top-level values
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    parser.add_argument("--config", help="YAML configuration file", **kw)
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging", **kw)
    parser.add_argument("--json", action="store_true", help="print the report as JSON", **kw)
    parser.add_argument("--mock-script", help="replay this mock agent script instead of a real agent", **kw)
    parser.add_argument("--agent-cmd", help="agent command line; placeholders {PROMPT_FILE} {WORKSPACE} "
                        "{C_ROOT} {ROLE}", **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cmigrate", description="Translate a C repository into a Rust crate")
    _common(parser, False)
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _common(common, True)

    p = sub.add_parser("analyze", parents=[common], help="scan C sources and emit the translation schedule")
    p.add_argument("--c-root", required=True)
    p.add_argument("--schedule", help="write the schedule JSON here")
    p.add_argument("--out", help="write the source model JSON here")

    p = sub.add_parser("scaffold", parents=[common], help="build the compilable Rust skeleton")
    p.add_argument("--c-root", required=True)
    p.add_argument("--out", required=True, help="target workspace (must be empty or absent)")
    p.add_argument("--interfaces", help="import an expert-written interface crate instead")
    p.add_argument("--max-repair", type=int)
    p.add_argument("--max-refactor", type=int)
    p.add_argument("--stage-timeout", type=float)
    p.add_argument("--report", help="write the skeleton report JSON here")

    p = sub.add_parser("map", parents=[common], help="map C functions to Rust declarations")
    p.add_argument("--c-root", required=True)
    p.add_argument("--workspace", required=True)
    p.add_argument("--schedule")
    p.add_argument("--mappings", required=True, help="mapping table path; reused if it exists and is still valid")
    p.add_argument("--force", action="store_true", help="recompute even if --mappings exists")

    p = sub.add_parser("translate", parents=[common], help="run the per-unit translation loop")
    p.add_argument("--c-root", required=True)
    p.add_argument("--workspace", required=True)
    p.add_argument("--schedule")
    p.add_argument("--mappings")
    p.add_argument("--state")
    p.add_argument("--mode", choices=["full", "base", "no-interfaces", "no-mapping"])
    p.add_argument("--resume", action="store_true")
    p.add_argument("--refactor-rounds", type=int)
    p.add_argument("--out", help="write the report JSON here")

    p = sub.add_parser("audit", parents=[common], help="safety and coverage metrics of a workspace")
    p.add_argument("--workspace", required=True)
    p.add_argument("--c-root", required=True)
    p.add_argument("--mappings")
    p.add_argument("--figures", help="directory for PNG charts and metrics.csv")
    p.add_argument("--out", help="write the report JSON here")

    p = sub.add_parser("run", parents=[common], help="analyze, scaffold, map, translate and audit")
    p.add_argument("--c-root", required=True)
    p.add_argument("--workspace", required=True)
    p.add_argument("--mode", choices=["full", "base", "no-interfaces", "no-mapping"])
    p.add_argument("--interfaces")
    p.add_argument("--state")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--max-repair", type=int)
    p.add_argument("--refactor-rounds", type=int)
    p.add_argument("--figures", help="directory for PNG charts and metrics.csv")
    p.add_argument("--out", help="write the report JSON here")
    return parser


def _overrides(args) -> dict:
    o = {}
    get = lambda name: getattr(args, name, None)  # noqa: E731
    if get("mode"):
        o["mode"] = get("mode")
    if get("interfaces"):
        o["interfaces"] = get("interfaces")
    if get("max_repair") is not None:
        o["scaffold.max_repair_attempts"] = get("max_repair")
    if get("max_refactor") is not None:
        o["scaffold.max_refactor_attempts"] = get("max_refactor")
    if get("stage_timeout") is not None:
        o["scaffold.stage_timeout"] = get("stage_timeout")
    if get("refactor_rounds") is not None:
        o["orchestrator.refactor_rounds"] = get("refactor_rounds")
    if get("mock_script"):
        o["agent.mock_script"] = get("mock_script")
    if get("agent_cmd"):
        o["agent.command"] = [get("agent_cmd")]
    return o


def _emit(args, report: dict, name: str) -> None:
    if getattr(args, "out", None) and args.command in ("translate", "audit", "run"):
        Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if args.json:
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        print(render_text(report, name))
    if getattr(args, "figures", None):
        for path in write_figures(report, args.figures, name):
            log.info("wrote %s", path)


def _schedule(args, cfg):
    model, schedule = analyze(args.c_root, cfg)
    if getattr(args, "schedule", None) and Path(args.schedule).is_file():
        schedule = TranslationSchedule.from_dict(json.loads(Path(args.schedule).read_text(encoding="utf-8")))
    return model, schedule


def cmd_analyze(args, cfg: PipelineConfig) -> int:
    model, schedule = analyze(args.c_root, cfg)
    if args.schedule:
        Path(args.schedule).write_text(schedule.to_json() + "\n", encoding="utf-8")
    if args.out:
        Path(args.out).write_text(model.to_json() + "\n", encoding="utf-8")
    summary = {
        "files": len(model.files),
        "functions": len(model.functions),
        "tests": len(model.test_functions),
        "units": len(schedule.units),
        "cycles": sum(1 for u in schedule.units if len(u.members) > 1),
        "group_order": schedule.group_order,
        "diagnostics": model.diagnostics,
    }
    if args.json:
        print(model.to_json())
    else:
        print(f"{summary['files']} files, {summary['functions']} functions, {summary['tests']} tests")
        for u in schedule.units:
            members = ", ".join(f"{p}::{n}" for p, n in u.members)
            print(f"  unit {u.unit_id:>3} [{u.group_id}] {members}")
        for d in model.diagnostics:
            print(f"  note: {d}")
    return EXIT_OK


def cmd_scaffold(args, cfg: PipelineConfig) -> int:
    model, schedule = analyze(args.c_root, cfg)
    toolchain = make_toolchain(cfg)
    toolchain.require()
    agent = make_agent(cfg)
    scaffolder = Scaffolder(model, schedule, args.c_root, args.out, agent, toolchain, cfg.scaffold,
                            PromptLibrary(cfg.agent.prompt_dir), cfg.scan)
    try:
        report = scaffolder.run(cfg.interfaces).to_dict()
        code = EXIT_OK
    except StageExhausted as exc:
        print(f"scaffold aborted: {exc}", file=sys.stderr)
        report = exc.report.to_dict() if exc.report else {}
        code = EXIT_ABORT
    if args.report:
        Path(args.report).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(report, indent=2) if args.json else
          f"skeleton: {report.get('stub_count', 0)} stubs, compilable={report.get('compilable')}")
    return code


def cmd_map(args, cfg: PipelineConfig) -> int:
    model, schedule = _schedule(args, cfg)
    path = Path(args.mappings)
    if path.is_file() and not args.force:
        table = MappingTable.load(path)
        log.info("reusing %s", path)
    else:
        agent = make_agent(cfg)
        table = map_all(schedule, model, args.c_root, args.workspace, agent, PromptLibrary(cfg.agent.prompt_dir),
                        MapperConfig(cfg.mapper.max_attempts, cfg.agent.timeout_secs))
        path.write_text(table.to_json() + "\n", encoding="utf-8")
    if args.json:
        print(table.to_json())
    else:
        print(f"{len(table.entries)} mapped, {len(table.unresolved)} unresolved")
        for u in table.unresolved:
            print(f"  {u.c_module}::{u.c_function}: {u.reason}")
    return EXIT_OK


def cmd_translate(args, cfg: PipelineConfig) -> int:
    model, schedule = _schedule(args, cfg)
    if cfg.mode == "base":
        print("mode base has no per-unit loop; use `run --mode base`", file=sys.stderr)
        return EXIT_USAGE
    table = MappingTable.load(args.mappings) if args.mappings else MappingTable()
    toolchain = make_toolchain(cfg)
    toolchain.require()
    orch = Orchestrator(schedule, table, model, args.c_root, args.workspace, make_agent(cfg), toolchain,
                        orchestrator_config(cfg), PromptLibrary(cfg.agent.prompt_dir), args.state)
    report = orch.run(resume_run=args.resume)
    _emit(args, report, Path(args.c_root).resolve().name)
    return exit_code_for(report)


def cmd_audit(args, cfg: PipelineConfig) -> int:
    model, schedule = analyze(args.c_root, cfg)
    if args.mappings:
        table = MappingTable.load(args.mappings)
    else:
        table = coverage_table(model, schedule, args.c_root, args.workspace)
    toolchain = make_toolchain(cfg)
    listed = toolchain.list_tests(args.workspace) if toolchain.available() else None
    safety, coverage = analyzers.audit(args.workspace, model, table, listed)
    report = {"safety": safety.to_dict(), "coverage": coverage.to_dict()}
    _emit(args, report, Path(args.c_root).resolve().name)
    return EXIT_OK


def cmd_run(args, cfg: PipelineConfig) -> int:
    result = run_pipeline(cfg, args.c_root, args.workspace, state_path=args.state, resume=args.resume)
    if result.exit_code == EXIT_ABORT:
        print(f"aborted in stage {result.stage}: {result.error}", file=sys.stderr)
    if result.report:
        _emit(args, result.report, Path(args.c_root).resolve().name)
    return result.exit_code


COMMANDS = {
    "analyze": cmd_analyze,
    "scaffold": cmd_scaffold,
    "map": cmd_map,
    "translate": cmd_translate,
    "audit": cmd_audit,
    "run": cmd_run,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2, which would read as a build failure
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args))
    except ValidationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args, cfg)
    except ValidationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PipelineError as exc:
        print(f"{args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_BUILD if type(exc).__name__ == "BuildFailed" else EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
