"""
Post-grasp pose calculus.

Subsequent actions edit the solved first target pose step by step; the
rule-based generator produces the same kind of step list from a fixed
recipe per instruction format. The end-effector approach axis is the
+z axis of its frame.
"""
import logging
import math
import re
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from ..common.config import PlanningConfig
from ..common.errors import InputError, SchemaError
from ..common.models import GripperState, PoseStepModel, TrajectoryDocument
from .constraint_lang import (
    MoveForward, MoveVerticallyDown, OpenGripper, RotateEndEffector180, SubsequentAction,
    format
)
from .geometry import Pose, as_vec3

logger = logging.getLogger(__name__)

PROVENANCE_GRASP = "grasp"
PROVENANCE_SOLVED = "solved"
_HALF_TURN = Rotation.from_rotvec([0.0, 0.0, np.pi])


@dataclass(frozen=True, eq=False)
class PoseStep:
    pose: Pose
    gripper: GripperState = GripperState.HOLD
    provenance: str = PROVENANCE_SOLVED

    def to_model(self) -> PoseStepModel:
        return PoseStepModel(pose=self.pose.to_model(), gripper=self.gripper, provenance=self.provenance)


def apply_action(current: Pose, a: SubsequentAction) -> PoseStep:
    """One subsequent action; only the Open action marks its step Open."""
    provenance = f"action: {format(a)}"
    if isinstance(a, MoveVerticallyDown):
        return PoseStep(Pose(current.position - np.array([0.0, 0.0, a.distance]), current.orientation),
                        GripperState.HOLD, provenance)
    if isinstance(a, MoveForward):
        return PoseStep(Pose(current.position + a.distance * current.approach_axis, current.orientation),
                        GripperState.HOLD, provenance)
    if isinstance(a, OpenGripper):
        return PoseStep(current, GripperState.OPEN, provenance)
    if isinstance(a, RotateEndEffector180):
        # about the approach axis, i.e. the frame's own z
        return PoseStep(Pose(current.position, current.orientation * _HALF_TURN), GripperState.HOLD, provenance)
    raise SchemaError(f"unknown action {type(a).__name__}", field_path="actions")


def plan_post_grasp(p1: Pose, actions: Sequence[SubsequentAction]) -> List[PoseStep]:
    steps = [PoseStep(p1, GripperState.HOLD, PROVENANCE_SOLVED)]
    for action in actions:
        steps.append(apply_action(steps[-1].pose, action))
    return steps


# Rule-based generation

@dataclass(frozen=True, eq=False)
class RuleTask:
    """
    One of the fixed instruction formats.

    ``target`` names the object the end-effector moves above (unused by
    Open); ``tool`` names the held object where the format mentions one.
    """
    kind: str
    target: str
    tool: Optional[str] = None
    target_position: Optional[np.ndarray] = None

    def with_target(self, position) -> "RuleTask":
        return replace(self, target_position=as_vec3(position, "target_position"))


_ARTICLE = r"(?:(?:the|a|an)\s+)?"
RULE_FORMATS = [
    ("hammer", re.compile(rf"^hammer\s+{_ARTICLE}(?P<target>.+)$", re.IGNORECASE)),
    ("press", re.compile(rf"^press\s+{_ARTICLE}(?P<target>.+?)\s+with\s+{_ARTICLE}(?P<tool>.+)$", re.IGNORECASE)),
    ("open", re.compile(rf"^open\s+{_ARTICLE}(?P<target>.+)$", re.IGNORECASE)),
    ("pour", re.compile(
        rf"^pour\s+water\s+from\s+{_ARTICLE}(?P<tool>.+?)\s+(?:in)?to\s+{_ARTICLE}(?P<target>.+)$",
        re.IGNORECASE)),
    ("put_into", re.compile(rf"^put\s+{_ARTICLE}(?P<tool>.+?)\s+into\s+{_ARTICLE}(?P<target>.+)$", re.IGNORECASE)),
]


def parse_rule_task(instruction: str) -> RuleTask:
    """
    Match an instruction against the five rule formats.

    Raises:
        InputError: the instruction fits no format
    """
    text = " ".join(instruction.split()).rstrip(".").strip()
    for kind, pattern in RULE_FORMATS:
        m = pattern.match(text)
        if m:
            groups = m.groupdict()
            return RuleTask(kind=kind, target=groups["target"].strip(), tool=(groups.get("tool") or None))
    raise InputError(
        f"'{instruction}' matches no rule-based instruction format",
        {"formats": ["Hammer A.", "Press A with B.", "Open A.", "Pour water from A to B.", "Put A into B."]},
    )


def _singular(word: str) -> str:
    word = word.lower().strip()
    for suffix in ("es", "s"):
        if word.endswith(suffix) and len(word) > len(suffix) + 2:
            return word[: -len(suffix)]
    return word


def same_object_name(a: str, b: str) -> bool:
    """Case-insensitive match tolerant of plurals ("flowers" == "flower")."""
    a, b = " ".join(a.lower().split()), " ".join(b.lower().split())
    return a == b or _singular(a) == _singular(b) or _singular(a) == b or a == _singular(b)


def find_object(name: str, objects: Sequence[Tuple[int, str]]) -> int:
    for object_id, object_name in objects:
        if same_object_name(name, object_name):
            return object_id
    raise InputError(f"no scene object named '{name}'", {"objects": [n for _, n in objects]})


def _above(task: RuleTask, grasp_pose: Pose, offset: float) -> Pose:
    if task.target_position is None:
        raise InputError(f"rule task '{task.kind}' needs the position of '{task.target}'")
    return Pose(task.target_position + np.array([0.0, 0.0, offset]), grasp_pose.orientation)


def _cm(meters: float) -> str:
    return f"{meters * 100:g}"


def plan_rule_based(task: RuleTask, grasp_pose: Pose,
                    config: Optional[PlanningConfig] = None) -> List[PoseStep]:
    """Fixed two-step (one for Open) recipes placing the end-effector relative to the target."""
    config = config or PlanningConfig()
    above = _cm(config.above_offset)
    if task.kind in ("hammer", "press"):
        mover = "hammer" if task.kind == "hammer" else task.tool
        first = PoseStep(_above(task, grasp_pose, config.above_offset), GripperState.HOLD,
                         f"rule: Move {mover} to {above} cm above {task.target}.")
        down = first.pose.moved([0.0, 0.0, -config.press_depth])
        return [first, PoseStep(down, GripperState.HOLD, f"rule: Move vertically down {_cm(config.press_depth)} cm.")]
    if task.kind == "open":
        back = grasp_pose.moved(-config.pull_distance * grasp_pose.approach_axis)
        return [PoseStep(back, GripperState.HOLD, f"rule: Move backward {_cm(config.pull_distance)} cm.")]
    if task.kind == "pour":
        first = PoseStep(_above(task, grasp_pose, config.above_offset), GripperState.HOLD,
                         f"rule: Move {task.tool} to {above} cm above {task.target}.")
        turned = Pose(first.pose.position, first.pose.orientation * _HALF_TURN)
        return [first, PoseStep(turned, GripperState.HOLD, "rule: End-effector rotates 180 degrees.")]
    if task.kind == "put_into":
        first = PoseStep(_above(task, grasp_pose, config.above_offset), GripperState.HOLD,
                         f"rule: Move {task.tool} to {above} cm above {task.target}.")
        return [first, PoseStep(first.pose, GripperState.OPEN, "rule: Open the gripper.")]
    raise InputError(f"unknown rule task kind '{task.kind}'")


# Interpolation

def _segment_count(a: Pose, b: Pose, max_step: float, max_angle: Optional[float]) -> int:
    distance = float(np.linalg.norm(b.position - a.position))
    count = math.ceil(distance / max_step - 1e-12) if distance > 0 else 1
    if max_angle is not None:
        angle = float((b.orientation * a.orientation.inv()).magnitude())
        if angle > 0:
            count = max(count, math.ceil(angle / max_angle - 1e-12))
    return max(count, 1)


def interpolate(steps: Sequence[PoseStep], max_step: float,
                max_angle: Optional[float] = None) -> List[Pose]:
    """
    Dense waypoints between consecutive steps.

    Positions are linear and orientations spherical; each step's own pose
    appears unchanged, and consecutive positions are at most ``max_step``
    apart (and rotations at most ``max_angle`` when given).
    """
    if not max_step > 0:
        raise SchemaError("max_step must be positive", field_path="max_step")
    if not steps:
        return []
    waypoints = [steps[0].pose]
    for prev, nxt in zip(steps, steps[1:]):
        a, b = prev.pose, nxt.pose
        count = _segment_count(a, b, max_step, max_angle)
        if count > 1:
            slerp = Slerp([0.0, 1.0], Rotation.from_quat([a.orientation.as_quat(), b.orientation.as_quat()]))
            for k in range(1, count):
                s = k / count
                waypoints.append(Pose(a.position + s * (b.position - a.position), slerp([s])[0]))
        waypoints.append(b)
    return waypoints


def trajectory_document(steps: Sequence[PoseStep], waypoints: Sequence[Pose]) -> TrajectoryDocument:
    return TrajectoryDocument(
        steps=[s.to_model() for s in steps],
        waypoints=[w.to_model() for w in waypoints],
    )
