"""Coarse-to-fine grounding through the oracle."""
import logging
from typing import List, Sequence

from ..common.errors import InvalidSelection
from ..common.models import CandidateLabel, GroundingPhase, GroundingRequestModel, StageName
from ..ops.oracle import Oracle
from ..ops.part_model import PartMask
from ..ops.scene import Scene

logger = logging.getLogger(__name__)


def _ask(oracle: Oracle, stage: StageName, phase: GroundingPhase, instruction: str,
         image: str, labels: List[CandidateLabel], single: bool) -> List[int]:
    if not labels:
        raise InvalidSelection(f"no candidates left for {stage.value} {phase.value} grounding")
    req = GroundingRequestModel(
        stage=stage, phase=phase, instruction=instruction, image=image, candidates=labels
    )
    ids = oracle.ground(req).ids
    if single and len(ids) != 1:
        raise InvalidSelection(
            f"{stage.value} grounding needs exactly one {phase.value} id, got {ids}",
            {"selected": ids},
        )
    logger.info(f"{stage.value} {phase.value} grounding chose {ids}")
    return ids


def ground_parts(oracle: Oracle, scene: Scene, parts: Sequence[PartMask], stage: StageName,
                 instruction: str, coarse_to_fine: bool, single: bool) -> List[PartMask]:
    """
    Object grounding, then part grounding within the chosen objects.

    Without coarse-to-fine a single part-level query covers every part.
    """
    image = scene.image_ref()
    by_id = {p.id: p for p in parts}
    candidates = list(parts)
    if coarse_to_fine:
        object_ids = sorted({p.object_id for p in parts})
        labels = [CandidateLabel(id=o.id, name=o.name) for o in scene.objects if o.id in object_ids]
        chosen = set(_ask(oracle, stage, GroundingPhase.COARSE_OBJECT, instruction, image, labels, single))
        candidates = [p for p in parts if p.object_id in chosen]
    labels = [CandidateLabel(id=p.id, name=p.name) for p in candidates]
    ids = _ask(oracle, stage, GroundingPhase.FINE_PART, instruction, image, labels, single)
    return [by_id[i] for i in ids]
