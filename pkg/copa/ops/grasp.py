"""Grasp candidate ingestion, synthesis, and part-mask filtering."""
import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from ..common.errors import EmptyCandidates, NoCandidateInMask, SchemaError
from ..common.models import GraspCandidateModel, GraspSelectionModel
from ..common.utils import read_json, validate_document
from .geometry import CameraModel, Pose, as_vec3, project_points
from .part_model import GeometricElement, PartMask
from .solver import associated_point

logger = logging.getLogger(__name__)

NEAR_RANGE = (0.1, 0.9)
DISTRACTOR_RANGE = (0.10, 0.30)
DISTRACTOR_CLEARANCE = 0.05


@dataclass(frozen=True, eq=False)
class GraspCandidate:
    pose: Pose
    grasp_point: np.ndarray
    width: float
    height: float
    depth: float
    score: float

    def __post_init__(self):
        object.__setattr__(self, "grasp_point", as_vec3(self.grasp_point, "grasp_point"))
        for name in ("width", "height", "depth"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise SchemaError(f"{name} must be positive, got {value}", field_path=name)
        if not np.isfinite(self.score):
            raise SchemaError("score must be finite", field_path="score")

    def to_model(self) -> GraspCandidateModel:
        return GraspCandidateModel(
            pose=self.pose.to_model(), grasp_point=self.grasp_point.tolist(),
            width=self.width, height=self.height, depth=self.depth, score=self.score,
        )

    @classmethod
    def from_model(cls, model: GraspCandidateModel) -> "GraspCandidate":
        return cls(
            Pose.from_model(model.pose), model.grasp_point,
            model.width, model.height, model.depth, model.score,
        )


@dataclass(frozen=True, eq=False)
class GraspSelection:
    chosen: GraspCandidate
    chosen_index: int
    in_mask_count: int
    total_count: int

    def to_model(self) -> GraspSelectionModel:
        return GraspSelectionModel(
            chosen=self.chosen.to_model(), chosen_index=self.chosen_index,
            in_mask_count=self.in_mask_count, total_count=self.total_count,
        )


def candidate_pixels(cands: Sequence[GraspCandidate], cam: CameraModel) -> Tuple[np.ndarray, np.ndarray]:
    """Grasp points rounded to the nearest pixel, plus an in-front flag."""
    points = np.array([c.grasp_point for c in cands], dtype=float).reshape(-1, 3)
    uv, in_front = project_points(points, cam)
    pixels = np.zeros((len(points), 2), dtype=int)
    pixels[in_front] = np.floor(uv[in_front] + 0.5).astype(int)
    return pixels, in_front


def in_mask(cands: Sequence[GraspCandidate], part_mask: PartMask, cam: CameraModel) -> np.ndarray:
    pixels, keep = candidate_pixels(cands, cam)
    height, width = part_mask.shape
    keep = keep & (pixels[:, 0] >= 0) & (pixels[:, 0] < width) & (pixels[:, 1] >= 0) & (pixels[:, 1] < height)
    flags = np.zeros(len(pixels), dtype=bool)
    flags[keep] = part_mask.pixels[pixels[keep, 1], pixels[keep, 0]]
    return flags


def filter_and_select(cands: Sequence[GraspCandidate], part_mask: PartMask,
                      cam: CameraModel) -> GraspSelection:
    """
    Keep candidates whose grasp point projects into the part mask, then take the top score.

    Ties go to the lowest candidate index.

    Raises:
        EmptyCandidates: the candidate list is empty
        NoCandidateInMask: nothing projects into the mask
    """
    if not cands:
        raise EmptyCandidates("no grasp candidates to choose from")
    flags = in_mask(cands, part_mask, cam)
    best = None
    for index in np.flatnonzero(flags):
        if best is None or cands[index].score > cands[best].score:
            best = int(index)
    if best is None:
        raise NoCandidateInMask(
            f"none of {len(cands)} candidates projects into part {mask_label(part_mask)}",
            {"part": part_mask.id, "total": len(cands)},
        )
    logger.info(
        f"Selected grasp {best} (score {cands[best].score:.3f}) from "
        f"{int(flags.sum())}/{len(cands)} candidates in part {part_mask.id}"
    )
    return GraspSelection(cands[best], best, int(flags.sum()), len(cands))


def mask_label(mask: PartMask) -> str:
    return f"{mask.id} ({mask.name})" if mask.name else str(mask.id)


def load_candidates(source) -> List[GraspCandidate]:
    """
    Read a candidate file; order is preserved.

    Raises:
        SchemaError: with the failing field path, e.g. ``1.score``
    """
    models = validate_document(List[GraspCandidateModel], read_json(source), source=str(source))
    return [GraspCandidate.from_model(m) for m in models]


def distance_to_element(point, element: GeometricElement) -> float:
    point = as_vec3(point, "point")
    if element.is_vector:
        a, b = element.vector.endpoint_near, element.vector.endpoint_far
        ab = b - a
        s = np.clip((point - a) @ ab / (ab @ ab), 0.0, 1.0)
        return float(np.linalg.norm(point - (a + s * ab)))
    return float(np.linalg.norm(point - element.surface.center))


def _random_direction(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def _top_down(yaw: float) -> Rotation:
    """Gripper approach (+z) pointing at the table, closing axis across ``yaw``."""
    return Rotation.from_euler("z", yaw) * Rotation.from_euler("x", np.pi)


def synth_candidates(part: GeometricElement, n: int, seed: int = 0,
                     spread: float = 0.008) -> List[GraspCandidate]:
    """
    ``n`` top-down candidates within ``spread`` of the element plus ``2n`` distractors.

    Near candidates sit along the middle of a vector element (or around a
    surface center); distractors land 10 to 30 cm away horizontally. The
    list is shuffled; everything derives from ``seed``.
    """
    if n < 1:
        raise SchemaError("n must be at least 1", field_path="n")
    rng = np.random.default_rng(seed)
    base = associated_point(part)
    if part.is_vector:
        direction = part.vector.direction
        yaw = float(np.arctan2(direction[1], direction[0]))
    else:
        yaw = None

    points = []
    for _ in range(n):
        if part.is_vector:
            t = rng.uniform(*NEAR_RANGE)
            anchor = part.vector.endpoint_near + t * (part.vector.endpoint_far - part.vector.endpoint_near)
        else:
            anchor = part.surface.center
        points.append(anchor + _random_direction(rng) * rng.uniform(0.0, spread))
    for _ in range(2 * n):
        candidate = None
        for _ in range(100):
            heading = rng.uniform(0.0, 2 * np.pi)
            offset = rng.uniform(*DISTRACTOR_RANGE) * np.array([np.cos(heading), np.sin(heading), 0.0])
            candidate = base + offset
            if distance_to_element(candidate, part) > DISTRACTOR_CLEARANCE:
                break
        points.append(candidate)

    cands = []
    for point in points:
        grasp_yaw = yaw if yaw is not None else rng.uniform(-np.pi, np.pi)
        cands.append(GraspCandidate(
            pose=Pose(point, _top_down(grasp_yaw)),
            grasp_point=point,
            width=float(rng.uniform(0.02, 0.08)),
            height=0.02,
            depth=float(rng.uniform(0.01, 0.04)),
            score=float(rng.uniform(0.0, 1.0)),
        ))
    order = rng.permutation(len(cands))
    logger.debug(f"Synthesized {len(cands)} candidates around element {part.id} (seed {seed})")
    return [cands[i] for i in order]
