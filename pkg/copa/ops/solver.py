"""
SE(3) constraint solver.

Finds the rigid transform T that minimizes the summed constraint losses.
Every slot whose element is attached to the gripper is transformed by T;
static elements and the "current position" slot of TargetAlong stay put.

Parameters are a 6-vector: axis-angle rotation followed by translation.
Each start runs BFGS with analytic gradients, then a least-squares polish
on residual vectors whose norms are the individual loss terms.
"""
import logging
from dataclasses import dataclass, field
from typing import AbstractSet, Dict, FrozenSet, List, Mapping, Optional, Tuple

import numpy as np
from scipy.optimize import least_squares, minimize
from scipy.spatial.transform import Rotation

from ..common.config import SolverConfig
from ..common.errors import InvalidProblem, UnresolvedReference
from ..common.models import (
    ConstraintLossModel, SolveProblemDocument, SolveResultDocument, TableModel
)
from .constraint_lang import (
    CollinearOpposite, HeightAboveTable, ParallelToTable, PerpendicularToTable,
    PointsDownward, ResolvedConstraint, TargetAlong, parse_constraint,
    resolve_constraint
)
from .geometry import Pose, RigidTransform, as_vec3, unit
from .part_model import GeometricElement

logger = logging.getLogger(__name__)

DOWN = np.array([0.0, 0.0, -1.0])
_EPS_NORM = 1e-15


@dataclass(frozen=True, eq=False)
class TableFrame:
    point: np.ndarray = field(default_factory=lambda: np.array([0.5, 0.0, 0.07]))
    normal: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __post_init__(self):
        object.__setattr__(self, "point", as_vec3(self.point, "table.point"))
        object.__setattr__(self, "normal", unit(self.normal, "table.normal"))

    @classmethod
    def from_model(cls, model: Optional[TableModel]) -> "TableFrame":
        if model is None:
            return cls()
        return cls(model.point, model.normal)

    def to_model(self) -> TableModel:
        return TableModel(point=self.point.tolist(), normal=self.normal.tolist())


def associated_point(e: GeometricElement) -> np.ndarray:
    """A surface's center, or a vector's anchor (the endpoint farther from the arm)."""
    return e.vector.anchor_point if e.is_vector else e.surface.center


@dataclass(frozen=True, eq=False)
class SolveProblem:
    constraints: Tuple[ResolvedConstraint, ...]
    movable: FrozenSet[int]
    table: TableFrame = field(default_factory=TableFrame)

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        object.__setattr__(self, "movable", frozenset(self.movable))
        for rc in self.constraints:
            if not isinstance(rc, ResolvedConstraint):
                raise UnresolvedReference(f"constraint {rc!r} has unresolved labels")
            if not transformed_slots(rc, self.movable):
                raise InvalidProblem(
                    f"'{rc.text()}' references no element attached to the gripper",
                    {"elements": [e.id for e in rc.elements], "movable": sorted(self.movable)},
                )

    @property
    def elements(self) -> Mapping[int, GeometricElement]:
        table = {}
        for rc in self.constraints:
            for element in rc.elements:
                table.setdefault(element.id, element)
        return table

    @property
    def static(self) -> FrozenSet[int]:
        return frozenset(self.elements) - self.movable

    @classmethod
    def from_document(cls, doc: SolveProblemDocument, strict_kinds: bool = False) -> "SolveProblem":
        elements = {m.id: GeometricElement.from_model(m) for m in doc.elements}
        constraints = [
            resolve_constraint(parse_constraint(text), elements, strict_kinds)
            for text in doc.constraints
        ]
        return cls(tuple(constraints), frozenset(doc.movable), TableFrame.from_model(doc.table))

    def to_document(self) -> SolveProblemDocument:
        return SolveProblemDocument(
            elements=[e.to_model() for e in self.elements.values()],
            movable=sorted(self.movable),
            constraints=[rc.text() for rc in self.constraints],
            table=self.table.to_model(),
        )


@dataclass(frozen=True, eq=False)
class SolveResult:
    transform: RigidTransform
    residual: float
    converged: bool
    losses: Tuple[Tuple[str, float], ...] = ()
    iterations: int = 0
    restarts_used: int = 0
    start_losses: Tuple[float, ...] = ()

    def to_document(self) -> SolveResultDocument:
        return SolveResultDocument(
            transform=self.transform.to_model(),
            residual=self.residual,
            converged=self.converged,
            losses=[ConstraintLossModel(constraint=text, loss=value) for text, value in self.losses],
            iterations=self.iterations,
            restarts_used=self.restarts_used,
            start_losses=list(self.start_losses),
        )


# Loss terms

def _skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def rotated_jacobian(rotvec: np.ndarray, rotation: np.ndarray, v: np.ndarray) -> np.ndarray:
    """d(R(w) v)/dw for the axis-angle vector w, as a 3x3 matrix."""
    theta2 = float(rotvec @ rotvec)
    if theta2 < 1e-16:
        return -_skew(rotation @ v)
    return -rotation @ _skew(v) @ (
        np.outer(rotvec, rotvec) + (rotation.T - np.eye(3)) @ _skew(rotvec)
    ) / theta2


def transformed_slots(rc: ResolvedConstraint, movable: AbstractSet[int]) -> FrozenSet[str]:
    """
    Slots whose element moves with the gripper.

    TargetAlong's third slot names a current position and is never moved.
    """
    fixed = ("c",) if isinstance(rc.constraint, TargetAlong) else ()
    return frozenset(
        slot for (slot, _), element in zip(rc.constraint.SLOTS, rc.elements)
        if element.id in movable and slot not in fixed
    )


def _default_movable(rc: ResolvedConstraint) -> FrozenSet[int]:
    return frozenset([rc.slot("a").id])


class _SlotValues:
    """Slot points and vectors, moved by (rotation, translation) where the slot is transformed."""

    def __init__(self, rc: ResolvedConstraint, rotation: np.ndarray, translation: np.ndarray,
                 moved: FrozenSet[str]):
        self.rc, self.rotation, self.translation, self.moved = rc, rotation, translation, moved

    def point(self, slot: str) -> np.ndarray:
        p = self.rc.point(slot)
        return self.rotation @ p + self.translation if slot in self.moved else p

    def vector(self, slot: str) -> np.ndarray:
        v = self.rc.vector(slot)
        return self.rotation @ v if slot in self.moved else v


Gradients = Dict[Tuple[str, str], np.ndarray]


def _cross_norm(x: np.ndarray, b: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
    """||x cross b|| with its gradients in x and in b."""
    w = np.cross(x, b)
    n = float(np.linalg.norm(w))
    if n < _EPS_NORM:
        return n, np.zeros(3), np.zeros(3)
    return n, np.cross(b, w) / n, np.cross(w, x) / n


def _terms(rc: ResolvedConstraint, values: _SlotValues, table: TableFrame) -> Tuple[float, Gradients]:
    """Loss plus its gradients w.r.t. each evaluated (slot, "point" | "vector") value."""
    c = rc.constraint
    if isinstance(c, CollinearOpposite):
        u, q = values.vector("a"), values.point("a")
        b, pb = values.vector("b"), values.point("b")
        l1, g_u, g_b = _cross_norm(u, b)
        l2, g_q, g_b2 = _cross_norm(q - pb, b)
        s = u + b
        l3 = float(np.linalg.norm(s))
        if l3 >= _EPS_NORM:
            g_u, g_b = g_u + s / l3, g_b + s / l3
        grads = {("a", "vector"): g_u, ("a", "point"): g_q, ("b", "vector"): g_b + g_b2, ("b", "point"): -g_q}
        return l1 + l2 + l3, grads
    if isinstance(c, TargetAlong):
        q, b, pc = values.point("a"), values.vector("b"), values.point("c")
        d = q - pc
        along = float(d @ b) - c.distance
        l2, g_d, g_b = _cross_norm(d, b)
        sign = np.sign(along)
        return abs(along) + l2, {("a", "point"): g_d + sign * b, ("b", "vector"): g_b + sign * d}
    if isinstance(c, ParallelToTable):
        dot = float(values.vector("a") @ table.normal)
        return abs(dot), {("a", "vector"): np.sign(dot) * table.normal}
    if isinstance(c, HeightAboveTable):
        err = float((values.point("a") - table.point) @ table.normal) - c.height
        return abs(err), {("a", "point"): np.sign(err) * table.normal}
    if isinstance(c, PerpendicularToTable):
        loss, g_u, _ = _cross_norm(values.vector("a"), table.normal)
        return loss, {("a", "vector"): g_u}
    if isinstance(c, PointsDownward):
        return float(-(values.vector("a") @ DOWN)), {("a", "vector"): -DOWN}
    raise UnresolvedReference(f"unknown constraint type {type(c).__name__}")


def _residuals(rc: ResolvedConstraint, values: _SlotValues, table: TableFrame) -> np.ndarray:
    """Residual vector whose zero set matches the constraint's satisfied set."""
    c = rc.constraint
    if isinstance(c, CollinearOpposite):
        u, q = values.vector("a"), values.point("a")
        b, pb = values.vector("b"), values.point("b")
        return np.concatenate([np.cross(u, b), np.cross(q - pb, b), u + b])
    if isinstance(c, TargetAlong):
        d = values.point("a") - values.point("c")
        b = values.vector("b")
        return np.concatenate([[d @ b - c.distance], np.cross(d, b)])
    if isinstance(c, ParallelToTable):
        return np.array([values.vector("a") @ table.normal])
    if isinstance(c, HeightAboveTable):
        return np.array([(values.point("a") - table.point) @ table.normal - c.height])
    if isinstance(c, PerpendicularToTable):
        return np.cross(values.vector("a"), table.normal)
    if isinstance(c, PointsDownward):
        return values.vector("a") - DOWN
    raise UnresolvedReference(f"unknown constraint type {type(c).__name__}")


def _check_resolved(c) -> ResolvedConstraint:
    if not isinstance(c, ResolvedConstraint):
        raise UnresolvedReference(f"constraint {c!r} must be resolved against an element table first")
    return c


def constraint_loss(c: ResolvedConstraint, t: RigidTransform, table: Optional[TableFrame] = None,
                    movable: Optional[AbstractSet[int]] = None) -> float:
    """
    Loss of one constraint under ``t``.

    Elements in ``movable`` are transformed by ``t``; when it is omitted only
    the first slot's element moves. Zero when satisfied, except
    PointsDownward whose optimum is -1.

    Raises:
        UnresolvedReference: if ``c`` is not bound to elements
    """
    c = _check_resolved(c)
    moved = transformed_slots(c, _default_movable(c) if movable is None else movable)
    loss, _ = _terms(c, _SlotValues(c, t.rotation_matrix, t.translation, moved), table or TableFrame())
    return loss


def total_loss(p: SolveProblem, t: RigidTransform) -> float:
    return float(sum(constraint_loss(rc, t, p.table, p.movable) for rc in p.constraints))


def loss_and_gradient(p: SolveProblem, params: np.ndarray) -> Tuple[float, np.ndarray]:
    """Total loss and its gradient w.r.t. the 6 parameters (rotvec, translation)."""
    params = np.asarray(params, dtype=float)
    rotvec, translation = params[:3], params[3:6]
    rotation = Rotation.from_rotvec(rotvec).as_matrix()
    total = 0.0
    grad = np.zeros(6)
    for rc in p.constraints:
        moved = transformed_slots(rc, p.movable)
        loss, grads = _terms(rc, _SlotValues(rc, rotation, translation, moved), p.table)
        total += loss
        for (slot, kind), g in grads.items():
            if slot not in moved:
                continue
            if kind == "point":
                grad[:3] += rotated_jacobian(rotvec, rotation, rc.point(slot)).T @ g
                grad[3:] += g
            else:
                grad[:3] += rotated_jacobian(rotvec, rotation, rc.vector(slot)).T @ g
    return total, grad


def gradient(p: SolveProblem, params: np.ndarray) -> np.ndarray:
    return loss_and_gradient(p, params)[1]


def finite_difference_gradient(p: SolveProblem, params: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of the total loss."""
    params = np.asarray(params, dtype=float)
    grad = np.zeros(len(params))
    for j in range(len(params)):
        step = np.zeros(len(params))
        step[j] = h
        plus = total_loss(p, RigidTransform.from_params(params + step))
        minus = total_loss(p, RigidTransform.from_params(params - step))
        grad[j] = (plus - minus) / (2 * h)
    return grad


def stacked_residuals(p: SolveProblem, params: np.ndarray) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    rotation = Rotation.from_rotvec(params[:3]).as_matrix()
    return np.concatenate([
        _residuals(rc, _SlotValues(rc, rotation, params[3:6], transformed_slots(rc, p.movable)), p.table)
        for rc in p.constraints
    ])


def constraint_losses(p: SolveProblem, t: RigidTransform) -> List[Tuple[str, float]]:
    return [(rc.text(), constraint_loss(rc, t, p.table, p.movable)) for rc in p.constraints]


def is_satisfied(p: SolveProblem, t: RigidTransform, tolerance: float = 1e-3) -> bool:
    """Success test: non-downward losses sum to at most ``tolerance`` and each downward term is within it of -1."""
    rest = 0.0
    for rc in p.constraints:
        loss = constraint_loss(rc, t, p.table, p.movable)
        if isinstance(rc.constraint, PointsDownward):
            if loss > -1.0 + tolerance:
                return False
        else:
            rest += loss
    return rest <= tolerance


# Starts

def _target_translation(p: SolveProblem, rotation: Rotation) -> np.ndarray:
    """Translation moving a transformed point onto the first derivable target, else zero."""
    for rc in p.constraints:
        c = rc.constraint
        moved = transformed_slots(rc, p.movable)
        if isinstance(c, CollinearOpposite) and len(moved) == 1:
            (slot,) = moved
            other = "b" if slot == "a" else "a"
            return rc.point(other) - rotation.apply(rc.point(slot))
        if isinstance(c, TargetAlong) and "a" in moved:
            b = rotation.apply(rc.vector("b")) if "b" in moved else rc.vector("b")
            return rc.point("c") + c.distance * b - rotation.apply(rc.point("a"))
        if isinstance(c, HeightAboveTable):
            err = float((rotation.apply(rc.point("a")) - p.table.point) @ p.table.normal) - c.height
            return -err * p.table.normal
    return np.zeros(3)


def start_points(p: SolveProblem, config: SolverConfig) -> List[np.ndarray]:
    """The identity, then ``random_starts`` uniform rotations with target-seeking translations."""
    starts = [np.zeros(6)]
    rng = np.random.default_rng(config.seed)
    for _ in range(config.random_starts):
        q = rng.normal(size=4)
        rotation = Rotation.from_quat(q / np.linalg.norm(q))
        starts.append(np.concatenate([rotation.as_rotvec(), _target_translation(p, rotation)]))
    return starts


def _local_solve(p: SolveProblem, x0: np.ndarray, config: SolverConfig) -> Tuple[np.ndarray, float, int]:
    """Best of (start, BFGS, least-squares polish) by exact total loss."""
    f0 = loss_and_gradient(p, x0)[0]
    best_x, best_f = x0, f0
    iterations = 0

    result = minimize(
        lambda x: loss_and_gradient(p, x), x0, jac=True, method="BFGS",
        options={"maxiter": config.max_iterations, "gtol": 1e-10},
    )
    iterations += int(result.nit)
    f = loss_and_gradient(p, result.x)[0]
    if np.all(np.isfinite(result.x)) and f < best_f:
        best_x, best_f = result.x, f

    if config.refine:
        polished = least_squares(
            lambda x: stacked_residuals(p, x), best_x, method="trf",
            xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=config.max_iterations,
        )
        iterations += int(polished.nfev)
        f = loss_and_gradient(p, polished.x)[0]
        if np.all(np.isfinite(polished.x)) and f < best_f:
            best_x, best_f = polished.x, f

    return np.asarray(best_x, dtype=float), float(best_f), iterations


def solve(p: SolveProblem, config: Optional[SolverConfig] = None) -> SolveResult:
    """
    Minimize the total loss over SE(3) with deterministic multi-start.

    Starts run in order; with ``stop_at_first_success`` the first start
    meeting the success test ends the search. Ties between starts keep the
    lowest index. A result is always returned; ``converged`` says whether
    the success test holds. The caller decides whether to raise
    ``NoConvergence``.

    Raises:
        InvalidProblem: if the problem has no constraints
    """
    config = config or SolverConfig()
    if not p.constraints:
        raise InvalidProblem("cannot solve a problem without constraints")

    best_x, best_f = None, np.inf
    start_losses: List[float] = []
    iterations = 0
    used = 0
    for index, x0 in enumerate(start_points(p, config)):
        used = index + 1
        start_losses.append(float(loss_and_gradient(p, x0)[0]))
        x, f, nit = _local_solve(p, x0, config)
        iterations += nit
        if f < best_f:
            best_x, best_f = x, f
        logger.debug(f"Start {index}: loss {start_losses[-1]:.6g} -> {f:.6g}")
        if config.stop_at_first_success and is_satisfied(p, RigidTransform.from_params(x), config.tolerance):
            best_x, best_f = x, f
            break

    transform = RigidTransform.from_params(best_x)
    converged = is_satisfied(p, transform, config.tolerance)
    residual = total_loss(p, transform)
    logger.info(
        f"Solved {len(p.constraints)} constraint(s): residual {residual:.6g}, "
        f"converged={converged}, starts used {used}"
    )
    return SolveResult(
        transform=transform,
        residual=residual,
        converged=converged,
        losses=tuple(constraint_losses(p, transform)),
        iterations=iterations,
        restarts_used=used,
        start_losses=tuple(start_losses),
    )


def pose_from_transform(grasp_pose: Pose, t: RigidTransform) -> Pose:
    """Apply a part-frame transform to the end-effector under the rigid-grasp assumption."""
    return Pose(t.apply_to_point(grasp_pose.position), t.rotation * grasp_pose.orientation)
