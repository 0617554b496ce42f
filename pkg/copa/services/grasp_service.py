"""Task-oriented grasping stage."""
import time
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

from ..common import BaseCopaService, CopaConfig, CopaError, StageName, StageResponse
from ..common.errors import InputError
from ..common.models import SynthesizeSpec
from ..ops.geometry import Pose
from ..ops.grasp import GraspCandidate, GraspSelection, filter_and_select, load_candidates, synth_candidates
from ..ops.part_model import PartMask, filter_arm_masks, model_part
from ..ops.scene import Scene
from .grounding import ground_parts
from .task import TaskSpec


@dataclass
class GraspPhaseResult:
    pose: Pose
    grasp_part: PartMask
    selection: GraspSelection
    response: StageResponse
    elapsed_ms: float


def visible_parts(scene: Scene, limit: float) -> List[PartMask]:
    """Scene parts minus those lying on the robot arm in their camera."""
    kept = []
    for part in scene.parts():
        arm = scene.view(part.camera).arm_mask
        kept.extend(filter_arm_masks([part], arm, limit) if arm is not None else [part])
    return kept


class GraspService(BaseCopaService):
    """Grounds the grasping part and picks the final grasp pose P0."""

    def __init__(self, config: Optional[CopaConfig] = None):
        super().__init__(service_name="grasp", stage=StageName.GRASP, config=config)

    def _get_service_endpoints(self) -> List[str]:
        return ["run_grasp_phase"]

    def candidates_for(self, scene: Scene, part: PartMask) -> List[GraspCandidate]:
        source = scene.candidate_source
        if source is None:
            raise InputError("scene declares no grasp candidate source", {"field": "grasp_candidates"})
        if isinstance(source, Path):
            return load_candidates(source)
        spec: SynthesizeSpec = source
        view = scene.view(part.camera)
        element = model_part(part, view.depth, view.camera, scene.arm_reference, self.config.part_model)
        seed = spec.seed if spec.seed is not None else self.config.synth_seed
        return synth_candidates(element, spec.n, seed, spec.spread)

    def run_grasp_phase(self, scene: Scene, task: TaskSpec) -> GraspPhaseResult:
        """
        Arm filtering, grasping-part grounding, candidate filtering and selection.

        Raises:
            StageError: wrapping the failing step's error
        """
        start_time = time.time()
        try:
            parts = visible_parts(scene, self.config.part_model.arm_overlap_limit)
            (part,) = ground_parts(
                task.oracle, scene, parts, StageName.GRASP, task.instruction,
                coarse_to_fine=task.coarse_to_fine, single=True,
            )
            self.logger.info(f"Grasping part {part.id} ({part.label()})")
            candidates = self.candidates_for(scene, part)
            selection = filter_and_select(candidates, part, scene.view(part.camera).camera)
        except CopaError as e:
            raise self.stage_error(e)

        response = self.create_response(
            success=True,
            message=f"Selected grasp {selection.chosen_index} on part {part.id}",
            metadata={
                "grasp_part": part.id,
                "in_mask_count": selection.in_mask_count,
                "total_count": selection.total_count,
            },
        )
        return GraspPhaseResult(
            pose=selection.chosen.pose,
            grasp_part=part,
            selection=selection,
            response=response,
            elapsed_ms=(time.time() - start_time) * 1000,
        )
