"""
Core 3D types: SE(3) transforms, poses, pinhole cameras and point clouds.

Conventions: lengths in meters, world frame z-up, camera frame x right /
y down / z forward, rotations serialized as unit quaternions (x, y, z, w).
Depth images are row-major ``depth[v, u]`` arrays of meters where 0 or a
non-finite value marks an invalid pixel.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from ..common.errors import BehindCamera, DegenerateVector, EmptyCloud, SchemaError
from ..common.models import CameraModelSchema, PoseModel

logger = logging.getLogger(__name__)

MIN_FORWARD_DEPTH = 1e-6
WORLD_UP = np.array([0.0, 0.0, 1.0])
WORLD_DOWN = np.array([0.0, 0.0, -1.0])


def as_vec3(values, name: str = "vector") -> np.ndarray:
    """Validate and copy a 3-vector."""
    arr = np.array(values, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise SchemaError(f"{name} must have 3 components, got {arr.size}", field_path=name)
    if not np.all(np.isfinite(arr)):
        raise SchemaError(f"{name} must be finite", field_path=name)
    return arr


def unit(values, name: str = "direction") -> np.ndarray:
    """Normalize a 3-vector, rejecting zero-length input."""
    v = as_vec3(values, name)
    norm = np.linalg.norm(v)
    if norm < 1e-12:
        raise DegenerateVector(f"{name} has zero length")
    return v / norm


def make_rotation(matrix) -> Rotation:
    """Nearest proper rotation to a (possibly perturbed) 3x3 matrix."""
    m = np.asarray(matrix, dtype=float)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        raise SchemaError("rotation matrix must be a finite 3x3 array", field_path="rotation")
    u, _, vt = np.linalg.svd(m)
    # flip the weakest axis when the projection would be a reflection
    d = 1.0 if np.linalg.det(u @ vt) > 0 else -1.0
    return Rotation.from_matrix(u @ np.diag([1.0, 1.0, d]) @ vt)


def rotation_from_quat(xyzw, name: str = "orientation_xyzw") -> Rotation:
    q = np.array(xyzw, dtype=float).reshape(-1)
    if q.shape != (4,) or not np.all(np.isfinite(q)) or np.linalg.norm(q) < 1e-12:
        raise SchemaError(f"{name} must be a nonzero finite quaternion", field_path=name)
    return Rotation.from_quat(q / np.linalg.norm(q))


def rotation_between(a, b) -> Rotation:
    """Smallest rotation taking direction ``a`` onto direction ``b``."""
    a, b = unit(a, "a"), unit(b, "b")
    axis = np.cross(a, b)
    s, c = np.linalg.norm(axis), float(np.dot(a, b))
    if s < 1e-12:
        if c > 0:
            return Rotation.identity()
        # antiparallel: any perpendicular axis
        helper = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        perp = np.cross(a, helper)
        return Rotation.from_rotvec(np.pi * perp / np.linalg.norm(perp))
    return Rotation.from_rotvec(axis / s * np.arctan2(s, c))


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


def _quat_model(rotation: Rotation) -> list:
    q = rotation.as_quat()
    # canonical sign keeps serialized output stable
    if q[3] < 0:
        q = -q
    return [float(x) for x in q]


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """An element of SE(3): ``T(p) = R p + t`` and ``T(v) = R v``."""
    rotation: Rotation = field(default_factory=Rotation.identity)
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if not isinstance(self.rotation, Rotation) or not self.rotation.single:
            raise SchemaError("rotation must be a single scipy Rotation", field_path="rotation")
        object.__setattr__(self, "translation", _readonly(as_vec3(self.translation, "translation")))

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_params(cls, params) -> "RigidTransform":
        """Build from the 6-vector (axis-angle rotation, translation)."""
        params = np.asarray(params, dtype=float)
        return cls(Rotation.from_rotvec(params[:3]), params[3:6])

    @classmethod
    def from_translation(cls, translation) -> "RigidTransform":
        return cls(Rotation.identity(), translation)

    @property
    def rotation_matrix(self) -> np.ndarray:
        return self.rotation.as_matrix()

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation.as_matrix()
        m[:3, 3] = self.translation
        return m

    def params(self) -> np.ndarray:
        return np.concatenate([self.rotation.as_rotvec(), self.translation])

    def apply_to_point(self, p) -> np.ndarray:
        return self.rotation.apply(as_vec3(p, "point")) + self.translation

    def apply_to_points(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        return self.rotation.apply(points) + self.translation

    def apply_to_vector(self, v) -> np.ndarray:
        return self.rotation.apply(as_vec3(v, "vector"))

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """``self ∘ other``: apply ``other`` first."""
        return RigidTransform(
            self.rotation * other.rotation,
            self.rotation.apply(other.translation) + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        inv = self.rotation.inv()
        return RigidTransform(inv, -inv.apply(self.translation))

    def almost_equal(self, other: "RigidTransform", atol: float = 1e-9) -> bool:
        return bool(np.allclose(self.matrix, other.matrix, atol=atol, rtol=0.0))

    def to_model(self) -> PoseModel:
        return PoseModel(
            position=[float(x) for x in self.translation],
            orientation_xyzw=_quat_model(self.rotation),
        )

    @classmethod
    def from_model(cls, model: PoseModel) -> "RigidTransform":
        return cls(rotation_from_quat(model.orientation_xyzw), model.position)


@dataclass(frozen=True, eq=False)
class Pose:
    """End-effector frame in world coordinates; its +z axis is the approach direction."""
    position: np.ndarray
    orientation: Rotation = field(default_factory=Rotation.identity)

    def __post_init__(self):
        if not isinstance(self.orientation, Rotation) or not self.orientation.single:
            raise SchemaError("orientation must be a single scipy Rotation", field_path="orientation")
        object.__setattr__(self, "position", _readonly(as_vec3(self.position, "position")))

    @property
    def approach_axis(self) -> np.ndarray:
        return self.orientation.apply([0.0, 0.0, 1.0])

    def as_transform(self) -> RigidTransform:
        return RigidTransform(self.orientation, self.position)

    def moved(self, offset) -> "Pose":
        return Pose(self.position + as_vec3(offset, "offset"), self.orientation)

    def almost_equal(self, other: "Pose", atol: float = 1e-9) -> bool:
        return self.as_transform().almost_equal(other.as_transform(), atol=atol)

    def to_model(self) -> PoseModel:
        return PoseModel(
            position=[float(x) for x in self.position],
            orientation_xyzw=_quat_model(self.orientation),
        )

    @classmethod
    def from_model(cls, model: PoseModel) -> "Pose":
        return cls(model.position, rotation_from_quat(model.orientation_xyzw))


def apply_to_point(t: RigidTransform, p) -> np.ndarray:
    """T(p) = R p + t."""
    return t.apply_to_point(p)


def apply_to_vector(t: RigidTransform, v) -> np.ndarray:
    """T(v) = R v."""
    return t.apply_to_vector(v)


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """apply(compose(a, b), p) == apply(a, apply(b, p))."""
    return a.compose(b)


@dataclass(frozen=True, eq=False)
class CameraModel:
    """Pinhole intrinsics plus world-to-camera extrinsics."""
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    extrinsics: RigidTransform = field(default_factory=RigidTransform.identity)
    name: str = "camera"

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise SchemaError("focal lengths must be positive", field_path="fx")
        if not (0 <= self.cx < self.width):
            raise SchemaError("cx must lie in [0, width)", field_path="cx")
        if not (0 <= self.cy < self.height):
            raise SchemaError("cy must lie in [0, height)", field_path="cy")

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.height, self.width)

    @property
    def camera_to_world(self) -> RigidTransform:
        return self.extrinsics.inverse()

    @property
    def center(self) -> np.ndarray:
        """Optical center in world coordinates."""
        return self.camera_to_world.translation

    def to_model(self) -> CameraModelSchema:
        return CameraModelSchema(
            fx=self.fx, fy=self.fy, cx=self.cx, cy=self.cy,
            width=self.width, height=self.height,
            extrinsics=self.extrinsics.to_model(),
        )

    @classmethod
    def from_model(cls, model: CameraModelSchema, name: Optional[str] = None) -> "CameraModel":
        return cls(
            fx=model.fx, fy=model.fy, cx=model.cx, cy=model.cy,
            width=model.width, height=model.height,
            extrinsics=RigidTransform.from_model(model.extrinsics),
            name=name or getattr(model, "name", "camera"),
        )

    @classmethod
    def looking_at(cls, eye, target, fx: float, fy: float, width: int, height: int,
                   cx: Optional[float] = None, cy: Optional[float] = None,
                   up=WORLD_UP, name: str = "camera") -> "CameraModel":
        """Camera at ``eye`` whose optical axis passes through ``target``."""
        eye = as_vec3(eye, "eye")
        forward = unit(as_vec3(target, "target") - eye, "forward")
        right = np.cross(forward, as_vec3(up, "up"))
        if np.linalg.norm(right) < 1e-9:
            right = np.cross(forward, [0.0, 1.0, 0.0])
        right = unit(right, "right")
        down = np.cross(forward, right)
        camera_to_world = RigidTransform(make_rotation(np.column_stack([right, down, forward])), eye)
        return cls(
            fx=fx, fy=fy,
            cx=width / 2.0 if cx is None else cx,
            cy=height / 2.0 if cy is None else cy,
            width=width, height=height,
            extrinsics=camera_to_world.inverse(), name=name,
        )


@dataclass(frozen=True, eq=False)
class PointCloud:
    """World-frame points with optional source pixels ``(u, v)``."""
    points: np.ndarray
    pixels: Optional[np.ndarray] = None

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "points", points)
        if self.pixels is not None:
            pixels = np.asarray(self.pixels).reshape(-1, 2)
            if len(pixels) != len(points):
                raise SchemaError("pixels and points differ in length", field_path="pixels")
            object.__setattr__(self, "pixels", pixels)

    def __len__(self) -> int:
        return len(self.points)


def _check_depth(depth, cam: CameraModel) -> np.ndarray:
    depth = np.asarray(depth, dtype=float)
    if depth.shape != cam.shape:
        raise SchemaError(
            f"depth image is {depth.shape[::-1]} but camera {cam.name} is {cam.width}x{cam.height}",
            field_path="depth",
        )
    return depth


def valid_depth(depth) -> np.ndarray:
    depth = np.asarray(depth, dtype=float)
    with np.errstate(invalid="ignore"):
        return np.isfinite(depth) & (depth > 0)


def back_project_pixels(us, vs, depths, cam: CameraModel) -> np.ndarray:
    """Lift pixel coordinates with depth to world points (N, 3)."""
    us = np.asarray(us, dtype=float)
    vs = np.asarray(vs, dtype=float)
    d = np.asarray(depths, dtype=float)
    camera_points = np.column_stack([(us - cam.cx) * d / cam.fx, (vs - cam.cy) * d / cam.fy, d])
    return cam.camera_to_world.apply_to_points(camera_points)


def back_project(depth, cam: CameraModel, mask=None) -> PointCloud:
    """
    Back-project every valid depth pixel into a world-frame cloud.

    Args:
        depth: (height, width) depth image in meters
        cam: Camera that captured the image
        mask: Optional boolean mask restricting the pixels used

    Returns:
        PointCloud with source pixels attached

    Raises:
        EmptyCloud: if no pixel has valid depth
    """
    depth = _check_depth(depth, cam)
    valid = valid_depth(depth)
    if mask is not None:
        valid &= np.asarray(mask, dtype=bool)
    vs, us = np.nonzero(valid)
    if us.size == 0:
        raise EmptyCloud(f"no valid depth pixels in camera {cam.name}")
    points = back_project_pixels(us, vs, depth[vs, us], cam)
    return PointCloud(points, np.column_stack([us, vs]))


def project_points(points, cam: CameraModel) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized projection returning ``(uv, in_front)``; uv is NaN behind the camera."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    camera_points = cam.extrinsics.apply_to_points(points)
    z = camera_points[:, 2]
    in_front = z > MIN_FORWARD_DEPTH
    uv = np.full((len(points), 2), np.nan)
    zf = z[in_front]
    uv[in_front, 0] = cam.fx * camera_points[in_front, 0] / zf + cam.cx
    uv[in_front, 1] = cam.fy * camera_points[in_front, 1] / zf + cam.cy
    return uv, in_front


def project(p, cam: CameraModel) -> Tuple[float, float]:
    """
    Project a world point to pixel coordinates.

    Raises:
        BehindCamera: if the camera-frame depth is not positive
    """
    uv, in_front = project_points(as_vec3(p, "point"), cam)
    if not in_front[0]:
        raise BehindCamera(f"point {list(np.round(p, 6))} is behind camera {cam.name}")
    return float(uv[0, 0]), float(uv[0, 1])
