"""copa command line interface."""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .common import CopaConfig, CopaError, PipelineMode, RunReport
from .common.errors import NoConvergence
from .common.models import SolveProblemDocument
from .common.utils import load_document, write_document
from .fixtures import FIXTURES, build_fixture
from .ops.grasp import filter_and_select
from .ops.oracle import open_oracle
from .ops.part_model import annotate, model_part
from .ops.render import render_scene
from .ops.scene import load_scene
from .ops.solver import SolveProblem, solve
from .orchestrator import CopaOrchestrator, exit_code_of
from .services import GraspService, OracleService, TaskSpec

logger = logging.getLogger("copa")


def _emit(document, out: Optional[str]) -> None:
    if out:
        path = write_document(out, document)
        logger.info(f"Wrote {path}")
    else:
        print(document.model_dump_json(indent=2))


def cmd_run(args, config: CopaConfig) -> int:
    scene = load_scene(args.scene)
    oracle = open_oracle(args.oracle, timeout=config.oracle.timeout)
    task = TaskSpec(args.instruction, oracle, PipelineMode(args.mode))
    report = CopaOrchestrator(config).run(scene, task, args.out)
    code = exit_code_of(report)
    if report.success:
        print(f"success: {len(report.trajectory.steps)} pose(s) written to {args.out}")
    else:
        print(f"failed: {report.error.get('message')}", file=sys.stderr)
    return code


def cmd_solve(args, config: CopaConfig) -> int:
    doc = load_document(SolveProblemDocument, args.problem)
    problem = SolveProblem.from_document(doc, strict_kinds=config.strict_kinds)
    result = solve(problem, config.solver)
    _emit(result.to_document(), args.out)
    if not result.converged:
        raise NoConvergence(result)
    return 0


def cmd_fit_parts(args, config: CopaConfig) -> int:
    scene = load_scene(args.scene)
    elements = []
    for part in scene.parts():
        view = scene.view(part.camera)
        elements.append(model_part(part, view.depth, view.camera, scene.arm_reference, config.part_model))
    annotations = []
    for name, view in scene.views.items():
        mine = [e for e in elements if e.camera == name]
        if mine:
            annotations.append(annotate(mine, view.camera, config.part_model.normal_tip_length))
    document = {
        "elements": [e.to_model().model_dump(mode="json") for e in elements],
        "annotations": [a.model_dump(mode="json") for a in annotations],
    }
    if args.out:
        write_document(args.out, document)
    else:
        print(json.dumps(document, indent=2, sort_keys=True))
    return 0


def cmd_grasp(args, config: CopaConfig) -> int:
    scene = load_scene(args.scene)
    part = scene.part(args.part)
    candidates = GraspService(config).candidates_for(scene, part)
    selection = filter_and_select(candidates, part, scene.view(part.camera).camera)
    _emit(selection.to_model(), args.out)
    return 0


def cmd_render(args, config: CopaConfig) -> int:
    scene = load_scene(args.scene)
    report = load_document(RunReport, args.report)
    out = args.out or str(Path(args.report).parent)
    for path in render_scene(scene, report, out, config.part_model.normal_tip_length):
        print(path)
    return 0


def cmd_serve_oracle(args, config: CopaConfig) -> int:
    service = OracleService(open_oracle(args.script, timeout=config.oracle.timeout), config,
                            host=args.host, port=args.port)
    service.run()
    return 0


def cmd_make_fixture(args, config: CopaConfig) -> int:
    names = sorted(FIXTURES) if args.task == "all" else [args.task]
    for name in names:
        out = Path(args.out) / name if args.task == "all" else Path(args.out)
        print(build_fixture(name, out))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="copa", description="Part-level constraint planning for manipulation")
    parser.add_argument("--config", help="JSON configuration file")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    verbosity.add_argument("--quiet", "-q", action="store_true", help="Warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Plan the pose sequence for one instruction")
    run.add_argument("--scene", required=True, help="Scene manifest JSON")
    run.add_argument("--instruction", required=True)
    run.add_argument("--oracle", required=True, help="Oracle script, previous report to replay, or http(s) URL")
    run.add_argument("--mode", default=PipelineMode.FULL.value, choices=[m.value for m in PipelineMode])
    run.add_argument("--out", required=True, help="Output directory")
    run.set_defaults(handler=cmd_run)

    solve_cmd = sub.add_parser("solve", help="Solve a standalone constraint problem")
    solve_cmd.add_argument("--problem", required=True)
    solve_cmd.add_argument("--out")
    solve_cmd.set_defaults(handler=cmd_solve)

    fit = sub.add_parser("fit-parts", help="Model every part of a scene as a vector or surface")
    fit.add_argument("--scene", required=True)
    fit.add_argument("--out")
    fit.set_defaults(handler=cmd_fit_parts)

    grasp = sub.add_parser("grasp", help="Select the grasp for one part")
    grasp.add_argument("--scene", required=True)
    grasp.add_argument("--part", required=True, type=int)
    grasp.add_argument("--out")
    grasp.set_defaults(handler=cmd_grasp)

    render = sub.add_parser("render", help="Draw annotated overlays for a run report")
    render.add_argument("--scene", required=True)
    render.add_argument("--report", required=True)
    render.add_argument("--out", help="Output directory (defaults to the report's)")
    render.set_defaults(handler=cmd_render)

    serve = sub.add_parser("serve-oracle", help="Serve an oracle script over HTTP")
    serve.add_argument("--script", required=True)
    serve.add_argument("--host", default="localhost")
    serve.add_argument("--port", type=int, default=8100)
    serve.set_defaults(handler=cmd_serve_oracle)

    fixture = sub.add_parser("make-fixture", help="Render a synthetic task scene")
    fixture.add_argument("--task", required=True, choices=sorted(FIXTURES) + ["all"])
    fixture.add_argument("--out", required=True)
    fixture.set_defaults(handler=cmd_make_fixture)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        config = CopaConfig.load(args.config)
        return args.handler(args, config)
    except CopaError as e:
        logger.error(e.message)
        print(f"error: {e.message}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.exception(f"Unexpected failure: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
