import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from copa.common.config import SolverConfig
from copa.common.errors import InvalidProblem, UnresolvedReference
from copa.ops.constraint_lang import (
    CollinearOpposite,
    HeightAboveTable,
    ParallelToTable,
    PerpendicularToTable,
    PointsDownward,
    TargetAlong,
    resolve_constraint,
)
from copa.ops.geometry import Pose, RigidTransform
from copa.ops.solver import (
    SolveProblem,
    TableFrame,
    constraint_loss,
    finite_difference_gradient,
    gradient,
    is_satisfied,
    pose_from_transform,
    solve,
    start_points,
    total_loss,
)

from .conftest import surface_element, vector_element

TABLE = TableFrame(point=[0.5, 0.0, 0.07], normal=[0.0, 0.0, 1.0])


def problem(constraints, elements, movable=(1,)):
    table = {e.id: e for e in elements}
    return SolveProblem(tuple(resolve_constraint(c, table) for c in constraints), frozenset(movable), TABLE)


def loss_of(c, elements):
    return constraint_loss(resolve_constraint(c, {e.id: e for e in elements}), RigidTransform.identity(), TABLE)


up_vector = vector_element(1, [0.4, 0.0, 0.10], [0.4, 0.0, 0.20])
side_vector = vector_element(1, [0.4, 0.0, 0.17], [0.5, 0.0, 0.17])
down_vector = vector_element(1, [0.4, 0.0, 0.30], [0.4, 0.0, 0.20])
lid = surface_element(3, [0.4, 0.0, 0.10], [0.0, 0.0, 1.0])


@pytest.mark.parametrize("constraint,elements,expected", [
    (ParallelToTable(1), [up_vector], 1.0),
    (ParallelToTable(1), [side_vector], 0.0),
    (PerpendicularToTable(1), [side_vector], 1.0),
    (PerpendicularToTable(1), [up_vector], 0.0),
    (PointsDownward(1), [down_vector], -1.0),
    (PointsDownward(1), [up_vector], 1.0),
    (HeightAboveTable(1, 0.05), [side_vector], 0.05),
    (HeightAboveTable(1, 0.10), [side_vector], 0.0),
    (TargetAlong(1, 3, 3, 0.05), [down_vector, lid], 0.05),
    (TargetAlong(1, 3, 3, 0.10), [down_vector, lid], 0.0),
    (CollinearOpposite(1, 3), [down_vector, lid], 0.0),
    (CollinearOpposite(1, 3), [up_vector, lid], 2.0),
])
def test_loss_values(constraint, elements, expected):
    assert loss_of(constraint, elements) == pytest.approx(expected, abs=1e-12)


def random_unit(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def across(rng, axis):
    """A random unit vector perpendicular to ``axis``."""
    w = random_unit(rng)
    w = w - (w @ axis) * axis
    return w / np.linalg.norm(w)


def vector_at(id, anchor, direction):
    return vector_element(id, anchor - 0.1 * direction, anchor)


def tilted(rng, base, away):
    v = base + rng.uniform(0.2, 1.0) * away
    return v / np.linalg.norm(v)


Z = np.array([0.0, 0.0, 1.0])


def collinear_case(rng, satisfied):
    b, pb = random_unit(rng), rng.uniform(-0.5, 0.5, 3)
    q = pb + rng.uniform(0.05, 0.3) * b
    u = -b if satisfied else tilted(rng, -b, across(rng, b))
    return CollinearOpposite(1, 2), [vector_at(1, q, u), vector_at(2, pb, b)]


def target_case(rng, satisfied):
    b, pc, d = random_unit(rng), rng.uniform(-0.5, 0.5, 3), rng.uniform(0.01, 0.2)
    q = pc + d * b
    if not satisfied:
        q = q + rng.uniform(0.01, 0.1) * random_unit(rng)
    elements = [vector_at(1, q, random_unit(rng)), vector_at(2, rng.uniform(-0.5, 0.5, 3), b),
                surface_element(3, pc, random_unit(rng))]
    return TargetAlong(1, 2, 3, d), elements


def parallel_case(rng, satisfied):
    u = across(rng, Z)
    return ParallelToTable(1), [vector_at(1, rng.uniform(-0.5, 0.5, 3), u if satisfied else tilted(rng, u, Z))]


def height_case(rng, satisfied):
    h = rng.uniform(0.0, 0.3)
    anchor = np.array([*rng.uniform(-0.5, 0.5, 2), 0.07 + h])
    if not satisfied:
        anchor[2] += rng.choice([-1.0, 1.0]) * rng.uniform(0.01, 0.1)
    return HeightAboveTable(1, h), [vector_at(1, anchor, random_unit(rng))]


def perpendicular_case(rng, satisfied):
    u = rng.choice([-1.0, 1.0]) * Z
    return PerpendicularToTable(1), [
        vector_at(1, rng.uniform(-0.5, 0.5, 3), u if satisfied else tilted(rng, u, across(rng, Z)))
    ]


def downward_case(rng, satisfied):
    u = -Z
    if not satisfied:
        while u[2] < -0.99:
            u = random_unit(rng)
    return PointsDownward(1), [vector_at(1, rng.uniform(-0.5, 0.5, 3), u)]


def reference_loss(c, elements, t, movable):
    """The loss table written out directly on element geometry."""
    table = {e.id: e for e in elements}

    def moved(slot):
        return getattr(c, slot) in movable and not (isinstance(c, TargetAlong) and slot == "c")

    def point(slot):
        e = table[getattr(c, slot)]
        p = e.vector.anchor_point if e.is_vector else e.surface.center
        return t.apply_to_point(p) if moved(slot) else p

    def vector(slot):
        e = table[getattr(c, slot)]
        v = e.vector.direction if e.is_vector else e.surface.normal
        return t.apply_to_vector(v) if moved(slot) else v

    n = TABLE.normal
    if isinstance(c, CollinearOpposite):
        u, b = vector("a"), vector("b")
        return (np.linalg.norm(np.cross(u, b)) + np.linalg.norm(np.cross(point("a") - point("b"), b))
                + np.linalg.norm(u + b))
    if isinstance(c, TargetAlong):
        d, b = point("a") - point("c"), vector("b")
        return abs(d @ b - c.distance) + np.linalg.norm(np.cross(d, b))
    if isinstance(c, ParallelToTable):
        return abs(vector("a") @ n)
    if isinstance(c, HeightAboveTable):
        return abs((point("a") - TABLE.point) @ n - c.height)
    if isinstance(c, PerpendicularToTable):
        return np.linalg.norm(np.cross(vector("a"), n))
    return vector("a") @ Z


CASES = [collinear_case, target_case, parallel_case, height_case, perpendicular_case, downward_case]


@pytest.mark.parametrize("case", CASES, ids=lambda case: case.__name__)
def test_loss_table_on_random_configurations(case):
    rng = np.random.default_rng(31)
    optimum = -1.0 if case is downward_case else 0.0
    identity = RigidTransform.identity()
    for _ in range(50):
        c, elements = case(rng, True)
        assert loss_of(c, elements) == pytest.approx(optimum, abs=1e-9)
        assert reference_loss(c, elements, identity, {1}) == pytest.approx(loss_of(c, elements), abs=1e-12)

        c, elements = case(rng, False)
        assert loss_of(c, elements) > optimum + 1e-3
        t = RigidTransform(Rotation.random(random_state=rng.integers(1 << 31)), rng.uniform(-0.2, 0.2, 3))
        for movable in ({1}, {1, 2}):
            rc = resolve_constraint(c, {e.id: e for e in elements})
            assert constraint_loss(rc, t, TABLE, movable) == pytest.approx(
                reference_loss(c, elements, t, movable), abs=1e-12
            )


def test_unresolved_constraint_is_rejected():
    with pytest.raises(UnresolvedReference):
        constraint_loss(ParallelToTable(1), RigidTransform.identity())


def test_static_elements_stay_put():
    p = problem([TargetAlong(1, 3, 3, 0.10)], [down_vector, lid])
    lift = RigidTransform.from_translation([0.0, 0.0, 0.02])
    # moving the held part by 2 cm leaves the lid where it is
    assert total_loss(p, lift) == pytest.approx(0.02)


def test_constraint_needs_a_movable_element():
    with pytest.raises(InvalidProblem):
        problem([ParallelToTable(3)], [lid], movable=(1,))
    # the reference point of a target is its current position, never moved
    with pytest.raises(InvalidProblem):
        problem([TargetAlong(3, 3, 1, 0.05)], [down_vector, lid], movable=(1,))


def test_parts_moving_together_keep_their_relation():
    head = vector_element(1, [0.40, 0.00, 0.20], [0.40, 0.00, 0.10])
    shaft = vector_element(2, [0.45, 0.05, 0.30], [0.42, 0.01, 0.16])
    p = problem([CollinearOpposite(1, 2)], [head, shaft], movable=(1, 2))
    at_rest = total_loss(p, RigidTransform.identity())
    assert at_rest > 0.1
    rng = np.random.default_rng(8)
    for _ in range(10):
        t = RigidTransform(Rotation.random(random_state=rng.integers(1 << 31)), rng.uniform(-0.3, 0.3, 3))
        assert total_loss(p, t) == pytest.approx(at_rest, abs=1e-9)


def test_static_part_may_come_first():
    striking = surface_element(1, [0.62, -0.035, 0.085], [1.0, 0.0, 0.0])
    nail = surface_element(3, [0.45, 0.20, 0.12], [0.0, 0.0, 1.0])
    p = problem([CollinearOpposite(3, 1), TargetAlong(1, 3, 3, 0.05)], [striking, nail])
    result = solve(p)
    assert result.converged
    normal = result.transform.apply_to_vector(striking.surface.normal)
    assert np.degrees(np.arccos(np.clip(normal @ [0.0, 0.0, -1.0], -1, 1))) < 0.1


def test_gradient_with_movable_second_slots():
    head = vector_element(1, [0.40, 0.00, 0.20], [0.40, 0.02, 0.10])
    handle = vector_element(2, [0.50, 0.10, 0.12], [0.43, 0.02, 0.13])
    nail = surface_element(3, [0.42, -0.1, 0.11], [0.1, 0.05, 0.99])
    p = problem([CollinearOpposite(3, 2), TargetAlong(1, 2, 3, 0.05), CollinearOpposite(1, 2)],
                [head, handle, nail], movable=(1, 2))
    rng = np.random.default_rng(12)
    for _ in range(20):
        params = np.concatenate([rng.uniform(-1.5, 1.5, 3), rng.uniform(-0.3, 0.3, 3)])
        np.testing.assert_allclose(gradient(p, params), finite_difference_gradient(p, params), atol=1e-5)


def test_empty_problem_cannot_be_solved():
    with pytest.raises(InvalidProblem):
        solve(SolveProblem((), frozenset({1}), TABLE))


def mixed_problem():
    tilted = vector_element(1, [0.45, 0.02, 0.12], [0.52, 0.06, 0.19])
    nail = surface_element(3, [0.42, -0.1, 0.11], [0.1, 0.05, 0.99])
    return problem(
        [CollinearOpposite(1, 3), TargetAlong(1, 3, 3, 0.05), HeightAboveTable(1, 0.04),
         ParallelToTable(1), PerpendicularToTable(1), PointsDownward(1)],
        [tilted, nail],
    )


def test_gradient_matches_finite_differences():
    p = mixed_problem()
    rng = np.random.default_rng(11)
    for _ in range(20):
        params = np.concatenate([rng.uniform(-1.5, 1.5, 3), rng.uniform(-0.3, 0.3, 3)])
        np.testing.assert_allclose(gradient(p, params), finite_difference_gradient(p, params), atol=1e-5)


def test_gradient_at_identity_matches_finite_differences():
    p = mixed_problem()
    params = np.array([1e-3, -2e-3, 5e-4, 0.01, 0.02, -0.01])
    np.testing.assert_allclose(gradient(p, params), finite_difference_gradient(p, params), atol=1e-5)


def test_start_points_begin_with_exact_identity():
    p = problem([ParallelToTable(1)], [up_vector])
    starts = start_points(p, SolverConfig(random_starts=8, seed=3))
    assert len(starts) == 9
    assert np.array_equal(starts[0], np.zeros(6))
    again = start_points(p, SolverConfig(random_starts=8, seed=3))
    assert all(np.array_equal(a, b) for a, b in zip(starts, again))


def test_satisfied_at_identity_stops_after_first_start():
    p = problem([PointsDownward(1), PerpendicularToTable(1)], [down_vector])
    result = solve(p)
    assert result.converged
    assert result.restarts_used == 1
    assert result.transform.almost_equal(RigidTransform.identity(), atol=1e-9)


def test_points_downward_is_judged_per_term():
    p = problem([PointsDownward(1)], [side_vector])
    assert not is_satisfied(p, RigidTransform.identity())
    flipped = RigidTransform(Rotation.from_euler("y", np.pi / 2), np.zeros(3))
    assert is_satisfied(p, flipped)


def planted_problem(rng):
    """Collinear plus target-along constraints satisfied by a random rigid motion."""
    near = rng.uniform([0.3, -0.2, 0.08], [0.6, 0.2, 0.2])
    far = near + 0.1 * Rotation.random(random_state=rng.integers(1 << 31)).apply([1.0, 0.0, 0.0])
    moved = vector_element(1, near, far)
    truth = RigidTransform(Rotation.random(random_state=rng.integers(1 << 31)), rng.uniform(-0.2, 0.2, 3))
    u = truth.apply_to_vector(moved.vector.direction)
    q = truth.apply_to_point(moved.vector.anchor_point)
    # target points opposite to u with its anchor 5 cm beyond q
    target = vector_element(3, q + 0.15 * u, q + 0.05 * u)
    return problem([CollinearOpposite(1, 3), TargetAlong(1, 3, 3, 0.05)], [moved, target]), truth


def test_recovers_planted_solutions():
    rng = np.random.default_rng(2024)
    converged = 0
    for _ in range(25):
        p, truth = planted_problem(rng)
        assert is_satisfied(p, truth, 1e-9)
        converged += solve(p).converged
    assert converged >= 24


def test_infeasible_problem_returns_best_effort():
    p = problem([ParallelToTable(1), PerpendicularToTable(1)], [side_vector])
    result = solve(p, SolverConfig(random_starts=2))
    assert not result.converged
    assert result.residual > 0.5
    assert result.restarts_used == 3
    assert len(result.start_losses) == 3


def test_solve_is_deterministic():
    p = mixed_problem()
    a = solve(p, SolverConfig(random_starts=3, seed=5))
    b = solve(p, SolverConfig(random_starts=3, seed=5))
    assert np.array_equal(a.transform.params(), b.transform.params())
    assert a.residual == b.residual


def test_hammer_strike_geometry():
    striking = surface_element(1, [0.62, -0.035, 0.085], [1.0, 0.0, 0.0])
    nail = surface_element(3, [0.45, 0.20, 0.12], [0.0, 0.0, 1.0])
    p = problem([CollinearOpposite(1, 3), TargetAlong(1, 3, 3, 0.05)], [striking, nail])
    result = solve(p)
    assert result.converged

    t = result.transform
    normal = t.apply_to_vector(striking.surface.normal)
    assert np.degrees(np.arccos(np.clip(normal @ [0.0, 0.0, -1.0], -1, 1))) < 0.1
    np.testing.assert_allclose(t.apply_to_point(striking.surface.center), [0.45, 0.20, 0.17], atol=1e-3)

    grasp = Pose([0.55, 0.08, 0.085], Rotation.from_euler("x", np.pi))
    moved = pose_from_transform(grasp, t)
    np.testing.assert_allclose(moved.position, t.apply_to_point(grasp.position))
    # the end effector keeps its distance to the striking surface
    before = np.linalg.norm(grasp.position - striking.surface.center)
    after = np.linalg.norm(moved.position - t.apply_to_point(striking.surface.center))
    assert after == pytest.approx(before)
    assert moved.orientation.approx_equal(t.rotation * grasp.orientation)


def test_problem_document_round_trip():
    p = problem([CollinearOpposite(1, 3), TargetAlong(1, 3, 3, 0.05)], [down_vector, lid])
    again = SolveProblem.from_document(p.to_document())
    assert again.movable == p.movable
    assert [rc.text() for rc in again.constraints] == [rc.text() for rc in p.constraints]
    assert total_loss(again, RigidTransform.identity()) == pytest.approx(total_loss(p, RigidTransform.identity()))


@pytest.mark.parametrize("make", [
    mixed_problem,
    lambda: problem([ParallelToTable(1), PerpendicularToTable(1)], [side_vector]),
])
def test_solution_is_never_worse_than_a_start(make):
    result = solve(make(), SolverConfig(random_starts=3, seed=9, stop_at_first_success=False))
    assert len(result.start_losses) == result.restarts_used == 4
    assert all(result.residual <= loss + 1e-12 for loss in result.start_losses)
