"""
Part modeling: turn a 2D part mask plus depth into a geometric element.

Slender parts (long thin minimum-area rectangle) become directed 3D
vectors; everything else becomes an oriented surface fitted with RANSAC.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import ConvexHull

from ..common.config import PartModelConfig
from ..common.errors import (
    BehindCamera, DegenerateMask, NoConsensus, NoDepth, SchemaError, TooFewPoints
)
from ..common.models import (
    AnnotationDocument, AnnotationEntry, ElementModel, PartKind, SurfaceElementModel,
    VectorElementModel
)
from .geometry import (
    CameraModel, as_vec3, back_project_pixels, project, unit, valid_depth
)

logger = logging.getLogger(__name__)

MIN_MASK_PIXELS = 20
LABEL_OFFSET_PX = 10.0
ENDPOINT_ATOL = 1e-9
DIRECTION_ATOL = 1e-6


@dataclass(frozen=True, eq=False)
class PartMask:
    """A labeled binary mask in one camera's image."""
    id: int
    pixels: np.ndarray
    name: Optional[str] = None
    camera: str = "camera"
    object_id: Optional[int] = None

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=bool)
        if pixels.ndim != 2:
            raise SchemaError(f"mask {self.id} must be a 2D array", field_path="mask")
        object.__setattr__(self, "pixels", pixels)
        if int(pixels.sum()) < MIN_MASK_PIXELS:
            raise DegenerateMask(
                f"mask {self.id} has {int(pixels.sum())} pixels (< {MIN_MASK_PIXELS})",
                {"part": self.id},
            )

    @property
    def area(self) -> int:
        return int(self.pixels.sum())

    @property
    def shape(self) -> Tuple[int, int]:
        return self.pixels.shape

    def label(self) -> str:
        return self.name or f"part {self.id}"


@dataclass(frozen=True, eq=False)
class VectorElement:
    endpoint_near: np.ndarray
    endpoint_far: np.ndarray
    anchor_point: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        near = as_vec3(self.endpoint_near, "endpoint_near")
        far = as_vec3(self.endpoint_far, "endpoint_far")
        if np.linalg.norm(far - near) <= 1e-4:
            raise DegenerateMask("vector endpoints coincide")
        object.__setattr__(self, "endpoint_near", near)
        object.__setattr__(self, "endpoint_far", far)
        anchor = as_vec3(self.anchor_point, "anchor_point")
        if np.allclose(anchor, far, rtol=0.0, atol=ENDPOINT_ATOL):
            other = near
        elif np.allclose(anchor, near, rtol=0.0, atol=ENDPOINT_ATOL):
            other = far
        else:
            raise SchemaError("vector anchor must be one of its endpoints", field_path="anchor_point")
        direction = unit(self.direction, "direction")
        if not np.allclose(direction, unit(anchor - other, "direction"), rtol=0.0, atol=DIRECTION_ATOL):
            raise SchemaError("vector direction must point from the other endpoint to the anchor",
                              field_path="direction")
        object.__setattr__(self, "anchor_point", anchor)
        object.__setattr__(self, "direction", direction)

    @classmethod
    def from_endpoints(cls, near, far) -> "VectorElement":
        """Vector pointing from ``near`` to ``far``; ``far`` is the anchor."""
        near, far = as_vec3(near, "endpoint_near"), as_vec3(far, "endpoint_far")
        return cls(near, far, far, unit(far - near, "direction"))

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.endpoint_far - self.endpoint_near))


@dataclass(frozen=True, eq=False)
class SurfaceElement:
    center: np.ndarray
    normal: np.ndarray
    inlier_count: int = 0

    def __post_init__(self):
        object.__setattr__(self, "center", as_vec3(self.center, "center"))
        object.__setattr__(self, "normal", unit(self.normal, "normal"))


@dataclass(frozen=True, eq=False)
class GeometricElement:
    """A modeled part: exactly one of ``vector`` / ``surface`` is set, matching ``kind``."""
    id: int
    kind: PartKind
    vector: Optional[VectorElement] = None
    surface: Optional[SurfaceElement] = None
    name: Optional[str] = None
    object_id: Optional[int] = None
    camera: Optional[str] = None

    def __post_init__(self):
        if self.kind == PartKind.SLENDER and (self.vector is None or self.surface is not None):
            raise SchemaError(f"slender element {self.id} needs a vector", field_path="vector")
        if self.kind == PartKind.SURFACE and (self.surface is None or self.vector is not None):
            raise SchemaError(f"surface element {self.id} needs a surface", field_path="surface")

    @classmethod
    def of_vector(cls, id: int, vector: VectorElement, **kwargs) -> "GeometricElement":
        return cls(id=id, kind=PartKind.SLENDER, vector=vector, **kwargs)

    @classmethod
    def of_surface(cls, id: int, surface: SurfaceElement, **kwargs) -> "GeometricElement":
        return cls(id=id, kind=PartKind.SURFACE, surface=surface, **kwargs)

    @property
    def is_vector(self) -> bool:
        return self.kind == PartKind.SLENDER

    def to_model(self) -> ElementModel:
        vector = surface = None
        if self.vector is not None:
            v = self.vector
            vector = VectorElementModel(
                endpoint_near=v.endpoint_near.tolist(), endpoint_far=v.endpoint_far.tolist(),
                anchor_point=v.anchor_point.tolist(), direction=v.direction.tolist(),
            )
        if self.surface is not None:
            s = self.surface
            surface = SurfaceElementModel(
                center=s.center.tolist(), normal=s.normal.tolist(), inlier_count=s.inlier_count
            )
        return ElementModel(
            id=self.id, name=self.name, kind=self.kind, object_id=self.object_id,
            camera=self.camera, vector=vector, surface=surface,
        )

    @classmethod
    def from_model(cls, model: ElementModel) -> "GeometricElement":
        vector = surface = None
        if model.vector is not None:
            v = model.vector
            vector = VectorElement(v.endpoint_near, v.endpoint_far, v.anchor_point, v.direction)
        if model.surface is not None:
            s = model.surface
            surface = SurfaceElement(s.center, s.normal, s.inlier_count)
        return cls(
            id=model.id, kind=model.kind, vector=vector, surface=surface,
            name=model.name, object_id=model.object_id, camera=model.camera,
        )


# Classification

def _pixel_corners(mask: np.ndarray) -> np.ndarray:
    """Corners of every boundary pixel, as (u, v) points."""
    padded = np.pad(mask, 1)
    interior = (
        padded[1:-1, 1:-1] & padded[:-2, 1:-1] & padded[2:, 1:-1]
        & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    vs, us = np.nonzero(mask & ~interior)
    offsets = np.array([[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]])
    centers = np.column_stack([us, vs]).astype(float)
    corners = (centers[:, None, :] + offsets[None, :, :]).reshape(-1, 2)
    return np.unique(corners, axis=0)


def min_area_rect(mask: np.ndarray) -> Tuple[float, float, float]:
    """
    Minimum-area rotated rectangle around the pixel squares of a mask.

    Returns:
        (long_side, short_side, angle) with angle the long side's direction in radians
    """
    corners = _pixel_corners(np.asarray(mask, dtype=bool))
    hull_points = corners[ConvexHull(corners).vertices]
    edges = np.roll(hull_points, -1, axis=0) - hull_points
    angles = np.unique(np.mod(np.arctan2(edges[:, 1], edges[:, 0]), np.pi / 2))

    best = None
    for angle in angles:
        c, s = np.cos(angle), np.sin(angle)
        rotated = hull_points @ np.array([[c, -s], [s, c]])
        extent = rotated.max(axis=0) - rotated.min(axis=0)
        area = extent[0] * extent[1]
        if best is None or area < best[0]:
            best = (area, extent, angle)

    _, extent, angle = best
    if extent[0] >= extent[1]:
        return float(extent[0]), float(extent[1]), float(angle)
    return float(extent[1]), float(extent[0]), float(angle + np.pi / 2)


def classify_part(mask: PartMask, aspect_threshold: float = 3.0) -> PartKind:
    """Slender iff the minimum-area rectangle's aspect ratio exceeds the threshold."""
    long_side, short_side, _ = min_area_rect(mask.pixels)
    if short_side < 2.0:
        raise DegenerateMask(
            f"mask {mask.id} is too thin ({short_side:.2f} px)", {"part": mask.id}
        )
    kind = PartKind.SLENDER if long_side / short_side > aspect_threshold else PartKind.SURFACE
    logger.debug(f"Part {mask.id}: rect {long_side:.1f}x{short_side:.1f} px -> {kind.value}")
    return kind


# Vector fitting

def _round_px(x) -> np.ndarray:
    return np.floor(np.asarray(x, dtype=float) + 0.5).astype(int)


def _window_depth(depth: np.ndarray, region: np.ndarray, u: int, v: int, window: int) -> Optional[float]:
    half = window // 2
    v0, v1 = max(v - half, 0), min(v + half + 1, depth.shape[0])
    u0, u1 = max(u - half, 0), min(u + half + 1, depth.shape[1])
    patch = depth[v0:v1, u0:u1][region[v0:v1, u0:u1]]
    if patch.size == 0:
        return None
    return float(np.median(patch))


def fit_vector(mask: PartMask, depth: np.ndarray, cam: CameraModel, arm_ref,
               config: Optional[PartModelConfig] = None) -> VectorElement:
    """
    Fit a directed 3D vector to a slender part.

    A total-least-squares line through the mask pixels is walked in half
    pixel steps; the first and last samples inside the mask are the 2D
    endpoints. Each endpoint takes the median valid depth of its window
    inside the mask. The endpoint farther from ``arm_ref`` is the anchor
    and the direction points toward it.

    Raises:
        DegenerateMask: if the line meets the mask in fewer than two distinct pixels
        NoDepth: if too few mask pixels carry depth, or an endpoint window has none
    """
    config = config or PartModelConfig()
    arm_ref = as_vec3(arm_ref, "arm_reference")
    depth = np.asarray(depth, dtype=float)
    region = mask.pixels & valid_depth(depth)
    if int(region.sum()) < config.min_depth_pixels:
        raise NoDepth(f"part {mask.id} has {int(region.sum())} pixels with depth", {"part": mask.id})

    vs, us = np.nonzero(mask.pixels)
    pts = np.column_stack([us, vs]).astype(float)
    mean = pts.mean(axis=0)
    _, _, vt = np.linalg.svd(pts - mean, full_matrices=False)
    line_dir = vt[0]

    s = (pts - mean) @ line_dir
    ts = np.arange(s.min() - 1.0, s.max() + 1.0 + 1e-9, 0.5)
    samples = mean[None, :] + ts[:, None] * line_dir[None, :]
    px = _round_px(samples)
    height, width = mask.shape
    inside = (px[:, 0] >= 0) & (px[:, 0] < width) & (px[:, 1] >= 0) & (px[:, 1] < height)
    hit = np.zeros(len(px), dtype=bool)
    hit[inside] = mask.pixels[px[inside, 1], px[inside, 0]]
    hit_idx = np.flatnonzero(hit)
    if hit_idx.size < 2 or np.array_equal(px[hit_idx[0]], px[hit_idx[-1]]):
        raise DegenerateMask(f"line fit of part {mask.id} meets fewer than 2 pixels", {"part": mask.id})

    ends = []
    for i in (hit_idx[0], hit_idx[-1]):
        u, v = px[i]
        d = _window_depth(depth, region, int(u), int(v), config.endpoint_window)
        if d is None:
            raise NoDepth(f"no valid depth near endpoint ({u}, {v}) of part {mask.id}", {"part": mask.id})
        ends.append(back_project_pixels([samples[i, 0]], [samples[i, 1]], [d], cam)[0])

    a, b = ends
    if np.linalg.norm(a - arm_ref) >= np.linalg.norm(b - arm_ref):
        near, far = b, a
    else:
        near, far = a, b
    vector = VectorElement.from_endpoints(near, far)
    logger.debug(
        f"Fitted vector for part {mask.id}: length {vector.length:.4f} m, "
        f"direction {np.round(vector.direction, 4).tolist()}"
    )
    return vector


# Surface fitting

def _plane_through(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Least-squares plane (centroid, unit normal)."""
    centroid = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - centroid, full_matrices=False)
    return centroid, vt[-1]


def ransac_plane(points: np.ndarray, threshold: float, iterations: int,
                 seed: int = 0) -> np.ndarray:
    """
    Boolean inlier mask of the best 3-point plane hypothesis.

    Ties keep the earliest hypothesis, so results depend only on ``seed``.
    """
    points = np.asarray(points, dtype=float)
    n = len(points)
    rng = np.random.default_rng(seed)
    best = np.zeros(n, dtype=bool)
    best_count = 0
    for _ in range(iterations):
        a, b, c = points[rng.choice(n, 3, replace=False)]
        normal = np.cross(b - a, c - a)
        norm = np.linalg.norm(normal)
        if norm < 1e-12:
            continue
        inliers = np.abs((points - a) @ (normal / norm)) <= threshold
        count = int(inliers.sum())
        if count > best_count:
            best, best_count = inliers, count
    return best


def fit_surface(mask: PartMask, depth: np.ndarray, cam: CameraModel, view_dir=None,
                config: Optional[PartModelConfig] = None) -> SurfaceElement:
    """
    Fit an oriented plane to a surface part.

    The normal is flipped to face the camera: ``normal . view_dir < 0``.
    ``view_dir`` defaults to the camera ray through the fitted center.

    Raises:
        TooFewPoints: fewer than ``ransac_min_points`` pixels with depth
        NoConsensus: best inlier ratio below ``min_inlier_ratio``
    """
    config = config or PartModelConfig()
    depth = np.asarray(depth, dtype=float)
    region = mask.pixels & valid_depth(depth)
    count = int(region.sum())
    if count < config.ransac_min_points:
        raise TooFewPoints(
            f"part {mask.id} has {count} points with depth (< {config.ransac_min_points})",
            {"part": mask.id},
        )
    vs, us = np.nonzero(region)
    points = back_project_pixels(us, vs, depth[vs, us], cam)

    inliers = ransac_plane(points, config.ransac_threshold, config.ransac_iterations, config.seed)
    ratio = inliers.sum() / len(points)
    if ratio < config.min_inlier_ratio:
        raise NoConsensus(
            f"part {mask.id}: best plane explains {ratio:.0%} of points",
            {"part": mask.id, "inlier_ratio": float(ratio)},
        )

    center, normal = _plane_through(points[inliers])
    # one re-selection against the refitted plane
    refined = np.abs((points - center) @ normal) <= config.ransac_threshold
    if refined.sum() >= 3:
        inliers = refined
        center, normal = _plane_through(points[inliers])

    view = unit(center - cam.center if view_dir is None else view_dir, "view_dir")
    if np.dot(normal, view) > 0:
        normal = -normal

    logger.debug(
        f"Fitted surface for part {mask.id} from {len(points)} points "
        f"(inliers {int(inliers.sum())})"
    )
    return SurfaceElement(center, normal, int(inliers.sum()))


def model_part(mask: PartMask, depth: np.ndarray, cam: CameraModel, arm_ref,
               config: Optional[PartModelConfig] = None, view_dir=None) -> GeometricElement:
    """Classify a part and fit the matching element."""
    config = config or PartModelConfig()
    kind = classify_part(mask, config.aspect_threshold)
    common = dict(name=mask.name, object_id=mask.object_id, camera=mask.camera)
    if kind == PartKind.SLENDER:
        return GeometricElement.of_vector(mask.id, fit_vector(mask, depth, cam, arm_ref, config), **common)
    return GeometricElement.of_surface(mask.id, fit_surface(mask, depth, cam, view_dir, config), **common)


def filter_arm_masks(masks: Sequence[PartMask], arm_mask: np.ndarray,
                     overlap_limit: float = 0.5) -> List[PartMask]:
    """Drop masks whose overlap with the arm exceeds ``overlap_limit`` of their own area."""
    arm_mask = np.asarray(arm_mask, dtype=bool)
    kept = []
    for mask in masks:
        if mask.shape != arm_mask.shape:
            raise SchemaError(
                f"arm mask is {arm_mask.shape[::-1]}, part {mask.id} is {mask.shape[::-1]}",
                field_path="arm_mask",
            )
        overlap = (mask.pixels & arm_mask).sum() / mask.area
        if overlap > overlap_limit:
            logger.info(f"Filtered part {mask.id} as robot arm ({overlap:.0%} overlap)")
            continue
        kept.append(mask)
    return kept


def annotate(elements: Sequence[GeometricElement], cam: CameraModel,
             tip_length: float = 0.05) -> AnnotationDocument:
    """Project elements into the image and place their numeric labels."""
    entries = []
    for element in elements:
        try:
            if element.is_vector:
                v = element.vector
                near = np.array(project(v.endpoint_near, cam))
                far = np.array(project(v.endpoint_far, cam))
                anchor = far if np.allclose(v.anchor_point, v.endpoint_far) else near
                other = near if anchor is far else far
                step = anchor - other
                length = np.linalg.norm(step)
                label = anchor + LABEL_OFFSET_PX * step / length if length > 1e-9 else anchor
                entries.append(AnnotationEntry(
                    id=element.id, name=element.name, kind=element.kind,
                    segment=[near.tolist(), far.tolist()], label_anchor=label.tolist(),
                ))
            else:
                s = element.surface
                center = np.array(project(s.center, cam))
                tip = np.array(project(s.center + tip_length * s.normal, cam))
                entries.append(AnnotationEntry(
                    id=element.id, name=element.name, kind=element.kind,
                    center=center.tolist(), normal_tip=tip.tolist(),
                    label_anchor=(center + [LABEL_OFFSET_PX, -LABEL_OFFSET_PX]).tolist(),
                ))
        except BehindCamera as e:
            raise BehindCamera(f"element {element.id}: {e.message}", {"element": element.id})
    return AnnotationDocument(camera=cam.name, width=cam.width, height=cam.height, entries=entries)
