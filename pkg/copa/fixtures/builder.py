"""
Synthetic tabletop scenes for the shipped tasks.

Each scene is a handful of planar quads (boxes are five quads) ray cast
through a pinhole camera into a depth image, an RGB image and one mask per
part. The builder also writes the grasp candidates and the scripted oracle
answers, so a fixture directory is a complete input for ``copa run``.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from ..common.errors import InputError
from ..common.models import (
    CameraEntry, GraspCandidateModel, ObjectEntry, OracleScriptDocument, OracleScriptEntry,
    PartEntry, PoseModel, SceneManifest, ScriptPhase, StageName, TableModel
)
from ..common.utils import write_document
from ..ops.geometry import CameraModel, Pose, as_vec3
from ..utils.file_ops import save_depth, save_mask_png, save_rgb

logger = logging.getLogger(__name__)

TABLE_HEIGHT = 0.07
IMAGE_SIZE = (640, 480)
FOCAL = 500.0
EYE = (1.1, 0.0, 0.6)
LOOK_AT = (0.5, 0.0, TABLE_HEIGHT)
ROBOT_BASE = (0.0, -0.4, TABLE_HEIGHT)
CAMERA_NAME = "front"

MANIFEST_FILE = "manifest.json"
SCRIPT_FILE = "oracle.json"
CANDIDATES_FILE = "candidates.json"

TABLE_COLOR = (150, 120, 90)
ARM_COLOR = (200, 200, 210)


@dataclass(frozen=True, eq=False)
class Quad:
    """Planar rectangle ``center + a*half_u + b*half_v`` for |a|, |b| <= 1."""
    center: np.ndarray
    half_u: np.ndarray
    half_v: np.ndarray
    color: Tuple[int, int, int]
    part: Optional[int] = None

    @property
    def normal(self) -> np.ndarray:
        n = np.cross(self.half_u, self.half_v)
        return n / np.linalg.norm(n)


def quad(center, half_u, half_v, color, part: Optional[int] = None) -> Quad:
    return Quad(as_vec3(center), as_vec3(half_u), as_vec3(half_v), tuple(color), part)


def box(center, half, color, parts: Optional[Dict[str, int]] = None) -> List[Quad]:
    """Five faces of an axis-aligned box resting on its open bottom."""
    c = as_vec3(center)
    hx, hy, hz = half
    parts = parts or {}
    faces = {
        "+x": (c + [hx, 0, 0], [0, hy, 0], [0, 0, hz]),
        "-x": (c - [hx, 0, 0], [0, hy, 0], [0, 0, hz]),
        "+y": (c + [0, hy, 0], [hx, 0, 0], [0, 0, hz]),
        "-y": (c - [0, hy, 0], [hx, 0, 0], [0, 0, hz]),
        "+z": (c + [0, 0, hz], [hx, 0, 0], [0, hy, 0]),
    }
    return [quad(fc, u, v, color, parts.get(name)) for name, (fc, u, v) in faces.items()]


def fixture_camera() -> CameraModel:
    width, height = IMAGE_SIZE
    return CameraModel.looking_at(EYE, LOOK_AT, FOCAL, FOCAL, width, height, name=CAMERA_NAME)


def rasterize(quads: Sequence[Quad], cam: CameraModel) -> Tuple[np.ndarray, np.ndarray]:
    """
    Ray cast every pixel against every quad.

    Returns:
        (depth, index): camera-z depth in meters (0 where nothing is hit)
        and the index of the visible quad (-1 where nothing is hit)
    """
    us, vs = np.meshgrid(np.arange(cam.width, dtype=float), np.arange(cam.height, dtype=float))
    rays_cam = np.stack([(us - cam.cx) / cam.fx, (vs - cam.cy) / cam.fy, np.ones_like(us)], axis=-1)
    # unit camera z, so the ray parameter is the depth
    rays = rays_cam @ cam.camera_to_world.rotation_matrix.T
    origin = cam.center

    depth = np.full(us.shape, np.inf)
    index = np.full(us.shape, -1, dtype=int)
    for i, q in enumerate(quads):
        n = q.normal
        denom = rays @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = float((q.center - origin) @ n) / denom
        offset = origin + t[..., None] * rays - q.center
        a = (offset @ q.half_u) / float(q.half_u @ q.half_u)
        b = (offset @ q.half_v) / float(q.half_v @ q.half_v)
        hit = (np.abs(denom) > 1e-12) & (t > 1e-6) & (np.abs(a) <= 1.0) & (np.abs(b) <= 1.0) & (t < depth)
        depth[hit] = t[hit]
        index[hit] = i
    depth[~np.isfinite(depth)] = 0.0
    return depth, index


def shade(quads: Sequence[Quad], index: np.ndarray, cam: CameraModel) -> np.ndarray:
    """Flat colors dimmed by how obliquely each quad faces the camera."""
    rgb = np.zeros(index.shape + (3,), dtype=np.uint8)
    forward = cam.camera_to_world.apply_to_vector([0.0, 0.0, 1.0])
    for i, q in enumerate(quads):
        factor = 0.55 + 0.45 * abs(float(q.normal @ forward))
        rgb[index == i] = np.clip(np.array(q.color) * factor, 0, 255).astype(np.uint8)
    return rgb


@dataclass(frozen=True)
class PartSpec:
    id: int
    name: str


@dataclass(frozen=True)
class ObjectSpec:
    id: int
    name: str
    parts: Tuple[PartSpec, ...]


@dataclass(frozen=True)
class CandidateSpec:
    point: Tuple[float, float, float]
    score: float
    rotation: Rotation = field(default_factory=lambda: top_down(0.0))


@dataclass
class Fixture:
    """A task scene plus the oracle answers that solve it."""
    name: str
    instruction: str
    quads: List[Quad]
    objects: List[ObjectSpec]
    candidates: List[CandidateSpec]
    grasp: Tuple[int, int]
    motion_objects: List[int]
    motion_parts: List[int]
    constraints: List[str]
    actions: List[str]
    arm_quad: Quad
    movable_objects: Optional[List[int]] = None

    @property
    def part_ids(self) -> List[int]:
        return [p.id for o in self.objects for p in o.parts]


def top_down(yaw: float) -> Rotation:
    """Approach axis pointing at the table."""
    return Rotation.from_euler("z", yaw) * Rotation.from_euler("x", np.pi)


def _table() -> Quad:
    return quad([0.5, 0.0, TABLE_HEIGHT], [0.6, 0.0, 0.0], [0.0, 0.6, 0.0], TABLE_COLOR)


def _arm() -> Quad:
    return quad([0.35, -0.30, 0.22], [0.0, 0.04, 0.0], [0.0, 0.0, 0.12], ARM_COLOR)


def _oracle_script(fixture: Fixture) -> OracleScriptDocument:
    grasp_object, grasp_part = fixture.grasp
    entries = [
        OracleScriptEntry(stage=StageName.GRASP, phase=ScriptPhase.COARSE_OBJECT,
                          instruction=fixture.instruction, response={"ids": [grasp_object]}),
        OracleScriptEntry(stage=StageName.GRASP, phase=ScriptPhase.FINE_PART,
                          instruction=fixture.instruction, response={"ids": [grasp_part]}),
        OracleScriptEntry(stage=StageName.MOTION, phase=ScriptPhase.COARSE_OBJECT,
                          instruction=fixture.instruction, response={"ids": fixture.motion_objects}),
        OracleScriptEntry(stage=StageName.MOTION, phase=ScriptPhase.FINE_PART,
                          instruction=fixture.instruction, response={"ids": fixture.motion_parts}),
        OracleScriptEntry(phase=ScriptPhase.CONSTRAINTS, instruction=fixture.instruction,
                          response={"constraints": fixture.constraints, "actions": fixture.actions}),
    ]
    return OracleScriptDocument(entries=entries)


# The five tasks

def hammer_fixture() -> Fixture:
    quads = [_table()]
    quads += box([0.56, -0.035, 0.085], [0.06, 0.015, 0.015], (90, 90, 100), {"+x": 1})
    quads += box([0.55, 0.08, 0.0775], [0.0125, 0.10, 0.0075], (160, 100, 40), {"+z": 2})
    quads += box([0.45, 0.20, 0.09], [0.003, 0.003, 0.02], (180, 180, 180))
    quads += box([0.45, 0.20, 0.115], [0.012, 0.012, 0.005], (200, 200, 200), {"+z": 3})
    arm = _arm()
    quads.append(arm)
    return Fixture(
        name="hammer",
        instruction="Hammer the nail.",
        quads=quads,
        objects=[
            ObjectSpec(1, "hammer", (PartSpec(1, "striking surface"), PartSpec(2, "handle"))),
            ObjectSpec(2, "nail", (PartSpec(3, "nail head"),)),
        ],
        candidates=[
            CandidateSpec((0.55, 0.03, 0.085), 0.62, top_down(np.pi / 2)),
            CandidateSpec((0.56, -0.035, 0.10), 0.97, top_down(0.0)),
            CandidateSpec((0.55, 0.08, 0.085), 0.91, top_down(np.pi / 2)),
            CandidateSpec((0.45, 0.20, 0.12), 0.88, top_down(0.3)),
            CandidateSpec((0.55, 0.13, 0.085), 0.55, top_down(np.pi / 2)),
            CandidateSpec((0.70, -0.15, TABLE_HEIGHT), 0.40, top_down(1.0)),
        ],
        grasp=(1, 2),
        motion_objects=[1, 2],
        motion_parts=[1, 2, 3],
        constraints=[
            "Vector 1 and Vector 3 are on the same line, with the opposite direction.",
            "The target position of Point 1 is 5 cm along Vector 3 from Point 3's current position.",
        ],
        actions=["Move vertically down 7 cm."],
        arm_quad=arm,
    )


def spoon_fixture() -> Fixture:
    quads = [_table()]
    quads += box([0.60, 0.025, 0.0775], [0.01, 0.075, 0.0075], (170, 170, 180), {"+z": 1})
    quads += box([0.60, 0.12, 0.0775], [0.02, 0.02, 0.0075], (170, 170, 180), {"+z": 2})
    quads += box([0.45, -0.15, 0.115], [0.03, 0.03, 0.045], (220, 60, 60), {"+z": 3})
    arm = _arm()
    quads.append(arm)
    return Fixture(
        name="spoon",
        instruction="Put the spoon into the cup.",
        quads=quads,
        objects=[
            ObjectSpec(1, "spoon", (PartSpec(1, "spoon handle"), PartSpec(2, "spoon bowl"))),
            ObjectSpec(2, "cup", (PartSpec(3, "cup opening"),)),
        ],
        candidates=[
            CandidateSpec((0.60, 0.00, 0.085), 0.81, top_down(np.pi / 2)),
            CandidateSpec((0.60, 0.12, 0.085), 0.93, top_down(0.0)),
            CandidateSpec((0.60, 0.05, 0.085), 0.77, top_down(np.pi / 2)),
            CandidateSpec((0.45, -0.15, 0.16), 0.85, top_down(0.0)),
        ],
        grasp=(1, 1),
        motion_objects=[1, 2],
        motion_parts=[1, 3],
        constraints=[
            "Vector 1 is perpendicular to the table surface.",
            "Vector 1 points downward.",
            "The target position of Point 1 is 8 cm along Vector 3 from Point 3's current position.",
        ],
        actions=["Move vertically down 5 cm.", "Open the gripper."],
        arm_quad=arm,
    )


def drawer_fixture() -> Fixture:
    quads = [_table()]
    quads += box([0.45, 0.0, 0.15], [0.15, 0.14, 0.08], (120, 90, 60), {"+x": 2})
    quads += box([0.615, 0.0, 0.15], [0.015, 0.06, 0.006], (60, 60, 60), {"+x": 1})
    arm = _arm()
    quads.append(arm)
    sideways = Rotation.from_euler("y", -np.pi / 2)
    return Fixture(
        name="drawer",
        instruction="Open the drawer.",
        quads=quads,
        objects=[ObjectSpec(1, "drawer", (PartSpec(1, "drawer handle"), PartSpec(2, "drawer front")))],
        candidates=[
            CandidateSpec((0.63, -0.03, 0.15), 0.74, sideways),
            CandidateSpec((0.60, 0.09, 0.12), 0.95, sideways),
            CandidateSpec((0.63, 0.0, 0.15), 0.86, sideways),
            CandidateSpec((0.63, 0.03, 0.15), 0.69, sideways),
        ],
        grasp=(1, 1),
        motion_objects=[1],
        motion_parts=[1, 2],
        constraints=[
            "Vector 1 is parallel to the table surface.",
            "Vector 2 is parallel to the table surface.",
            "The target position of Point 1 is 10 cm along Vector 2 from Point 1's current position.",
        ],
        actions=[],
        arm_quad=arm,
    )


def press_button_fixture() -> Fixture:
    quads = [_table()]
    quads += box([0.58, 0.05, 0.0775], [0.01, 0.09, 0.0075], (60, 120, 200), {"+z": 1})
    quads += box([0.42, -0.12, 0.09], [0.025, 0.025, 0.02], (230, 200, 40), {"+z": 2})
    arm = _arm()
    quads.append(arm)
    return Fixture(
        name="press-button",
        instruction="Press the button with the stick.",
        quads=quads,
        objects=[
            ObjectSpec(1, "stick", (PartSpec(1, "stick"),)),
            ObjectSpec(2, "button", (PartSpec(2, "button top"),)),
        ],
        candidates=[
            CandidateSpec((0.58, 0.02, 0.085), 0.71, top_down(np.pi / 2)),
            CandidateSpec((0.42, -0.12, 0.11), 0.92, top_down(0.0)),
            CandidateSpec((0.58, 0.06, 0.085), 0.83, top_down(np.pi / 2)),
        ],
        grasp=(1, 1),
        motion_objects=[1, 2],
        motion_parts=[1, 2],
        constraints=[
            "Vector 1 is perpendicular to the table surface.",
            "Vector 1 points downward.",
            "The target position of Point 1 is 3 cm along Vector 2 from Point 2's current position.",
        ],
        actions=["Move vertically down 4 cm."],
        arm_quad=arm,
    )


def flower_fixture() -> Fixture:
    quads = [_table()]
    quads += box([0.60, 0.03, 0.0775], [0.006, 0.09, 0.0075], (40, 150, 60), {"+z": 1})
    quads += box([0.60, -0.085, 0.0775], [0.025, 0.025, 0.0075], (230, 80, 160), {"+z": 2})
    quads += box([0.44, -0.16, 0.12], [0.035, 0.035, 0.05], (70, 110, 200), {"+z": 3})
    arm = _arm()
    quads.append(arm)
    return Fixture(
        name="flower",
        instruction="Put the flower into the vase.",
        quads=quads,
        objects=[
            ObjectSpec(1, "flower", (PartSpec(1, "stem"), PartSpec(2, "blossom"))),
            ObjectSpec(2, "vase", (PartSpec(3, "vase opening"),)),
        ],
        candidates=[
            CandidateSpec((0.60, 0.02, 0.085), 0.79, top_down(np.pi / 2)),
            CandidateSpec((0.60, -0.085, 0.085), 0.90, top_down(0.0)),
            CandidateSpec((0.60, 0.07, 0.085), 0.64, top_down(np.pi / 2)),
        ],
        grasp=(1, 1),
        motion_objects=[1, 2],
        motion_parts=[1, 3],
        constraints=[
            "Vector 1 is perpendicular to the table surface.",
            "Vector 1 points downward.",
            "The target position of Point 1 is 6 cm along Vector 3 from Point 3's current position.",
        ],
        actions=["Move vertically down 8 cm.", "Open the gripper."],
        arm_quad=arm,
    )


FIXTURES = {
    "hammer": hammer_fixture,
    "spoon": spoon_fixture,
    "drawer": drawer_fixture,
    "press-button": press_button_fixture,
    "flower": flower_fixture,
}


def get_fixture(name: str) -> Fixture:
    if name not in FIXTURES:
        raise InputError(f"unknown fixture '{name}'", {"fixtures": sorted(FIXTURES)})
    return FIXTURES[name]()


def build_fixture(name: str, out_dir, with_arm_part: Optional[bool] = None) -> Path:
    """
    Render a fixture into ``out_dir`` and return the manifest path.

    The hammer scene also lists the robot gripper as an object, whose part
    the arm filter removes before grounding; ``with_arm_part`` overrides
    that choice.
    """
    fixture = get_fixture(name)
    out_dir = Path(out_dir)
    cam = fixture_camera()
    depth, index = rasterize(fixture.quads, cam)

    save_depth(out_dir / "depth.npy", depth)
    save_rgb(out_dir / "rgb.png", shade(fixture.quads, index, cam))
    arm_index = next(i for i, q in enumerate(fixture.quads) if q is fixture.arm_quad)
    save_mask_png(out_dir / "arm.png", index == arm_index)

    objects = []
    for obj in fixture.objects:
        parts = []
        for part in obj.parts:
            members = [i for i, q in enumerate(fixture.quads) if q.part == part.id]
            mask_path = f"masks/part_{part.id}.png"
            save_mask_png(out_dir / mask_path, np.isin(index, members))
            parts.append(PartEntry(id=part.id, name=part.name, mask=mask_path))
        objects.append(ObjectEntry(id=obj.id, name=obj.name, parts=parts))
    if with_arm_part if with_arm_part is not None else name == "hammer":
        objects.append(ObjectEntry(id=9, name="gripper", parts=[PartEntry(id=9, name="gripper finger", mask="arm.png")]))

    candidates = [
        GraspCandidateModel(
            pose=Pose(np.array(c.point, dtype=float), c.rotation).to_model(),
            grasp_point=list(c.point), width=0.04, height=0.02, depth=0.02, score=c.score,
        )
        for c in fixture.candidates
    ]
    write_document(out_dir / CANDIDATES_FILE, [c.model_dump(mode="json") for c in candidates])
    write_document(out_dir / SCRIPT_FILE, _oracle_script(fixture))

    camera_entry = CameraEntry(
        **cam.to_model().model_dump(), name=CAMERA_NAME,
        depth="depth.npy", rgb="rgb.png", arm_mask="arm.png",
    )
    manifest = SceneManifest(
        cameras=[camera_entry],
        objects=objects,
        robot_base=PoseModel(position=list(ROBOT_BASE)),
        grasp_candidates=CANDIDATES_FILE,
        table=TableModel(point=list(LOOK_AT), normal=[0.0, 0.0, 1.0]),
        movable_objects=fixture.movable_objects,
    )
    path = write_document(out_dir / MANIFEST_FILE, manifest)
    logger.info(f"Built fixture '{name}' in {out_dir} ({len(fixture.quads)} quads, {len(objects)} objects)")
    return path
