"""Scene manifests: cameras, depth, part masks grouped by object."""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from ..common.errors import DuplicateKey, InputError, SchemaError
from ..common.models import SceneManifest, SynthesizeSpec
from ..common.utils import load_document
from ..utils.file_ops import load_depth, load_mask, load_rgb, resolve_path
from .geometry import CameraModel, Pose, as_vec3
from .part_model import PartMask
from .solver import TableFrame

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class CameraView:
    camera: CameraModel
    depth: np.ndarray
    rgb: Optional[np.ndarray] = None
    arm_mask: Optional[np.ndarray] = None

    @property
    def name(self) -> str:
        return self.camera.name


@dataclass(frozen=True, eq=False)
class SceneObject:
    id: int
    name: str
    parts: Tuple[PartMask, ...] = ()


@dataclass(frozen=True, eq=False)
class Scene:
    root: Path
    manifest: SceneManifest
    views: Dict[str, CameraView]
    objects: Tuple[SceneObject, ...]
    arm_reference: np.ndarray
    table: TableFrame = field(default_factory=TableFrame)
    robot_base: Optional[Pose] = None
    post_grasp: Optional["Scene"] = None

    @property
    def default_view(self) -> CameraView:
        return next(iter(self.views.values()))

    def view(self, name: Optional[str]) -> CameraView:
        if name is None:
            return self.default_view
        if name not in self.views:
            raise SchemaError(f"unknown camera '{name}'", field_path="camera")
        return self.views[name]

    def parts(self) -> List[PartMask]:
        return [part for obj in self.objects for part in obj.parts]

    def part(self, part_id: int) -> PartMask:
        for part in self.parts():
            if part.id == part_id:
                return part
        raise InputError(f"scene has no part {part_id}", {"part": part_id})

    def object(self, object_id: int) -> SceneObject:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise InputError(f"scene has no object {object_id}", {"object": object_id})

    def object_of(self, part_id: int) -> SceneObject:
        return self.object(self.part(part_id).object_id)

    def image_ref(self, camera: Optional[str] = None) -> str:
        """Manifest path of a camera's RGB frame, as sent to the oracle."""
        name = camera or self.default_view.name
        for entry in self.manifest.cameras:
            if entry.name == name:
                return entry.rgb or ""
        return ""

    @property
    def candidate_source(self) -> Union[Path, SynthesizeSpec, None]:
        source = self.manifest.grasp_candidates
        if isinstance(source, str):
            return resolve_path(source, self.root)
        return source

    @property
    def observation(self) -> "Scene":
        """The post-grasp observation, or this scene when none was captured."""
        return self.post_grasp or self


def load_scene(path, nested: bool = False) -> Scene:
    """
    Load and validate a scene manifest; image paths are manifest-relative.

    Raises:
        SchemaError: schema violations, resolution mismatches, unknown cameras
        DuplicateKey: repeated object or part ids, or camera names
    """
    path = Path(path)
    manifest = load_document(SceneManifest, path)
    root = path.parent

    views: Dict[str, CameraView] = {}
    for index, entry in enumerate(manifest.cameras):
        if entry.name in views:
            raise DuplicateKey(f"camera name '{entry.name}' repeats", {"index": index})
        camera = CameraModel.from_model(entry, name=entry.name)
        depth = load_depth(entry.depth, entry.depth_scale, root)
        if depth.shape != camera.shape:
            raise SchemaError(
                f"depth for camera '{entry.name}' is {depth.shape[1]}x{depth.shape[0]}, "
                f"expected {camera.width}x{camera.height}",
                field_path=f"cameras.{index}.depth",
            )
        rgb = load_rgb(entry.rgb, root) if entry.rgb else None
        arm = load_mask(entry.arm_mask, root, camera.shape) if entry.arm_mask is not None else None
        views[entry.name] = CameraView(camera, depth, rgb, arm)

    default_camera = manifest.cameras[0].name
    seen_objects, seen_parts = set(), set()
    objects = []
    for obj in manifest.objects:
        if obj.id in seen_objects:
            raise DuplicateKey(f"object id {obj.id} repeats", {"object": obj.id})
        seen_objects.add(obj.id)
        parts = []
        for part in obj.parts:
            if part.id in seen_parts:
                raise DuplicateKey(f"part id {part.id} repeats", {"part": part.id})
            seen_parts.add(part.id)
            camera_name = part.camera or default_camera
            if camera_name not in views:
                raise SchemaError(f"part {part.id} names unknown camera '{camera_name}'", field_path="camera")
            pixels = load_mask(part.mask, root, views[camera_name].camera.shape)
            parts.append(PartMask(
                id=part.id, pixels=pixels, name=part.name, camera=camera_name, object_id=obj.id
            ))
        objects.append(SceneObject(obj.id, obj.name, tuple(parts)))

    robot_base = Pose.from_model(manifest.robot_base) if manifest.robot_base else None
    if manifest.arm_reference is not None:
        arm_reference = as_vec3(manifest.arm_reference, "arm_reference")
    elif robot_base is not None:
        arm_reference = robot_base.position
    else:
        arm_reference = np.zeros(3)

    post_grasp = None
    if manifest.post_grasp_observation and not nested:
        post_grasp = load_scene(resolve_path(manifest.post_grasp_observation, root), nested=True)

    scene = Scene(
        root=root, manifest=manifest, views=views, objects=tuple(objects),
        arm_reference=arm_reference, table=TableFrame.from_model(manifest.table),
        robot_base=robot_base, post_grasp=post_grasp,
    )
    logger.info(
        f"Loaded scene {path}: {len(views)} camera(s), {len(objects)} object(s), "
        f"{len(seen_parts)} part(s)"
    )
    return scene
