"""copa pipeline orchestrator."""
import logging
import time
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

from ..common import CopaConfig, CopaError, GripperState, RunReport, StageError, StageName
from ..common.utils import write_document
from ..ops.oracle import AuditingOracle
from ..ops.post_grasp import PROVENANCE_GRASP, PoseStep, interpolate, trajectory_document
from ..ops.render import render_scene
from ..ops.scene import Scene
from ..services.grasp_service import GraspService
from ..services.motion_service import MotionService
from ..services.task import TaskSpec

logger = logging.getLogger("copa-orchestrator")

REPORT_FILE = "report.json"
TRAJECTORY_FILE = "trajectory.json"


class CopaOrchestrator:
    """Runs grasping then motion planning for one instruction over one scene.

    A run is sequential and keeps its state in the report it returns, so
    separate orchestrators (or runs with different output directories) may
    execute concurrently.
    """

    def __init__(self, config: Optional[CopaConfig] = None):
        self.config = config or CopaConfig.from_env()
        self.grasp_service = GraspService(self.config)
        self.motion_service = MotionService(self.config)

    def run(self, scene: Scene, task: TaskSpec, out_dir=None) -> RunReport:
        """
        Compose both phases and write the trajectory and report files.

        Failures do not raise: they land in ``report.error`` together with
        the exit code, and everything produced so far stays in the report.
        """
        audit = AuditingOracle(task.oracle)
        audited = replace(task, oracle=audit)
        report = RunReport(instruction=task.instruction, mode=task.mode, seed=self.config.solver.seed)
        logger.info(f"Running '{task.instruction}' in {task.mode.value} mode")

        try:
            grasp = self._timed(report, StageName.GRASP, self.grasp_service.run_grasp_phase, scene, audited)
            report.grasp = grasp.selection.to_model()
            report.grasp_part = grasp.grasp_part.id
            report.stages.append(grasp.response)

            try:
                motion = self._timed(
                    report, StageName.MOTION, self.motion_service.run_motion_phase,
                    scene, audited, grasp.pose, grasp.grasp_part,
                )
            finally:
                self._record_motion_context(report)
            report.stages.append(motion.response)

            steps = [PoseStep(grasp.pose, GripperState.HOLD, PROVENANCE_GRASP)] + motion.steps
            waypoints = interpolate(steps, self.config.planning.max_step, self.config.planning.max_angle)
            report.trajectory = trajectory_document(steps, waypoints)
            report.success = True
            logger.info(f"Planned {len(steps)} pose(s), {len(waypoints)} waypoint(s)")
        except StageError as e:
            self._record_failure(report, e)
        finally:
            report.oracle_log = list(audit.log)

        if out_dir is not None:
            self.write_outputs(scene, report, out_dir)
        return report

    def _timed(self, report: RunReport, stage: StageName, fn, *args):
        start_time = time.time()
        try:
            return fn(*args)
        finally:
            report.timing[stage.value] = (time.time() - start_time) * 1000

    def _record_motion_context(self, report: RunReport) -> None:
        context = self.motion_service.context
        report.elements = [e.to_model() for e in context.elements]
        report.annotation = context.annotation
        report.plan = context.plan
        report.solve = context.solve.to_document() if context.solve is not None else None
        report.solve_calls = context.solve_calls

    def _record_failure(self, report: RunReport, error: StageError) -> None:
        logger.error(f"Run failed: {error.message}")
        report.error = {**error.to_dict(), "exit_code": error.exit_code}
        service = self.grasp_service if error.stage == StageName.GRASP.value else self.motion_service
        report.stages.append(service.create_response(
            success=False, message=error.error.message, error_details=error.error.to_dict(),
        ))

    def write_outputs(self, scene: Scene, report: RunReport, out_dir) -> List[Path]:
        out_dir = Path(out_dir)
        written = []
        if report.trajectory is not None:
            written.append(write_document(out_dir / TRAJECTORY_FILE, report.trajectory))
        written.append(write_document(out_dir / REPORT_FILE, report))
        if self.config.render_overlays and report.elements:
            try:
                written.extend(render_scene(scene, report, out_dir, self.config.part_model.normal_tip_length))
            except CopaError as e:
                logger.warning(f"Overlay rendering skipped: {e.message}")
        return written


def exit_code_of(report: RunReport) -> int:
    """Process exit status for a finished run."""
    if report.success:
        return 0
    return int((report.error or {}).get("exit_code", 1))
