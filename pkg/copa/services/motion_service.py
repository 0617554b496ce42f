"""Task-aware motion planning stage."""
import time
from dataclasses import dataclass, field
from typing import List, Optional, Set

from ..common import BaseCopaService, CopaConfig, CopaError, StageName, StageResponse
from ..common.errors import ConstraintParseFailure, InputError, NoConvergence
from ..common.models import (
    AnnotationDocument, ConstraintRequestModel, ElementSummary, MotionPlanDocument, PipelineMode
)
from ..ops.constraint_lang import parse_plan, plan_document, resolve
from ..ops.geometry import Pose
from ..ops.part_model import GeometricElement, PartMask, annotate, model_part
from ..ops.post_grasp import (
    PoseStep, find_object, parse_rule_task, plan_post_grasp, plan_rule_based
)
from ..ops.scene import Scene
from ..ops.solver import SolveProblem, SolveResult, associated_point, pose_from_transform, solve
from .grasp_service import visible_parts
from .grounding import ground_parts
from .task import TaskSpec


@dataclass
class MotionPhaseResult:
    steps: List[PoseStep]
    elements: List[GeometricElement]
    response: StageResponse
    annotation: Optional[AnnotationDocument] = None
    plan: Optional[MotionPlanDocument] = None
    solve: Optional[SolveResult] = None
    solve_calls: int = 0
    elapsed_ms: float = 0.0


@dataclass
class MotionFailureContext:
    """What the motion stage produced before it failed."""
    elements: List[GeometricElement] = field(default_factory=list)
    annotation: Optional[AnnotationDocument] = None
    plan: Optional[MotionPlanDocument] = None
    solve: Optional[SolveResult] = None
    solve_calls: int = 0


class MotionService(BaseCopaService):
    """Derives the post-grasp pose sequence from the instruction and the grasp pose."""

    def __init__(self, config: Optional[CopaConfig] = None):
        super().__init__(service_name="motion", stage=StageName.MOTION, config=config)
        self.context = MotionFailureContext()

    def _get_service_endpoints(self) -> List[str]:
        return ["run_motion_phase"]

    def model_parts(self, scene: Scene, parts: List[PartMask]) -> List[GeometricElement]:
        elements = []
        for part in parts:
            view = scene.view(part.camera)
            elements.append(model_part(part, view.depth, view.camera, scene.arm_reference, self.config.part_model))
        return elements

    def movable_ids(self, scene: Scene, grasp_part: PartMask) -> Set[int]:
        """Parts of the manifest's movable objects, else of the grasped object."""
        object_ids = scene.manifest.movable_objects
        if object_ids is None:
            object_ids = [grasp_part.object_id]
        return {part.id for object_id in object_ids for part in scene.object(object_id).parts}

    def run_motion_phase(self, scene: Scene, task: TaskSpec, p0: Pose,
                         grasp_part: PartMask) -> MotionPhaseResult:
        """
        Plan P1..PN after grasping.

        Raises:
            StageError: wrapping the failing step's error; ``self.context``
                keeps the partial results for the report
        """
        start_time = time.time()
        self.context = MotionFailureContext()
        try:
            if task.mode == PipelineMode.RULE_BASED:
                result = self._rule_based(scene.observation, task, p0)
            else:
                result = self._constraint_based(scene.observation, task, p0, grasp_part)
        except CopaError as e:
            raise self.stage_error(e)
        result.elapsed_ms = (time.time() - start_time) * 1000
        return result

    def _constraint_based(self, scene: Scene, task: TaskSpec, p0: Pose,
                          grasp_part: PartMask) -> MotionPhaseResult:
        parts = visible_parts(scene, self.config.part_model.arm_overlap_limit)
        relevant = ground_parts(
            task.oracle, scene, parts, StageName.MOTION, task.instruction,
            coarse_to_fine=task.coarse_to_fine, single=False,
        )
        elements = self.model_parts(scene, relevant)
        annotation = annotate(elements, scene.default_view.camera, self.config.part_model.normal_tip_length)
        self.context.elements, self.context.annotation = elements, annotation

        response = task.oracle.generate_constraints(ConstraintRequestModel(
            instruction=task.instruction,
            image=scene.image_ref(),
            elements=[ElementSummary(id=e.id, kind=e.kind, name=e.name) for e in elements],
        ))
        plan = parse_plan(MotionPlanDocument(constraints=response.constraints, actions=response.actions))
        if not plan.constraints:
            raise ConstraintParseFailure([], ["oracle returned no constraints"])
        self.context.plan = plan_document(plan)
        resolved = resolve(plan, elements, strict_kinds=self.config.strict_kinds)
        self.logger.info(
            f"Resolved {len(resolved.constraints)} constraint(s) and {len(resolved.actions)} action(s)"
        )

        problem = SolveProblem(resolved.constraints, self.movable_ids(scene, grasp_part), scene.table)
        result = solve(problem, self.config.solver)
        self.context.solve, self.context.solve_calls = result, 1
        if not result.converged:
            raise NoConvergence(result)

        p1 = pose_from_transform(p0, result.transform)
        steps = plan_post_grasp(p1, resolved.actions)
        return MotionPhaseResult(
            steps=steps,
            elements=elements,
            response=self.create_response(
                success=True,
                message=f"Planned {len(steps)} post-grasp pose(s)",
                metadata={"residual": result.residual, "restarts_used": result.restarts_used},
            ),
            annotation=annotation,
            plan=self.context.plan,
            solve=result,
            solve_calls=1,
        )

    def _rule_based(self, scene: Scene, task: TaskSpec, p0: Pose) -> MotionPhaseResult:
        rule = parse_rule_task(task.instruction)
        elements: List[GeometricElement] = []
        if rule.kind != "open":
            object_id = find_object(rule.target, [(o.id, o.name) for o in scene.objects])
            target = scene.object(object_id)
            if not target.parts:
                raise InputError(f"object '{target.name}' has no parts", {"object": object_id})
            target_part = min(target.parts, key=lambda p: p.id)
            (element,) = self.model_parts(scene, [target_part])
            elements.append(element)
            rule = rule.with_target(associated_point(element))
        self.context.elements = elements
        steps = plan_rule_based(rule, p0, self.config.planning)
        self.logger.info(f"Rule '{rule.kind}' produced {len(steps)} pose(s)")
        return MotionPhaseResult(
            steps=steps,
            elements=elements,
            response=self.create_response(
                success=True,
                message=f"Planned {len(steps)} rule-based pose(s)",
                metadata={"rule": rule.kind},
            ),
        )
