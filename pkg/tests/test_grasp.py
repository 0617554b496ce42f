import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from copa.common.errors import EmptyCandidates, GraspFailure, InputError, NoCandidateInMask, SchemaError
from copa.ops.geometry import CameraModel, Pose, project
from copa.ops.grasp import (
    GraspCandidate,
    distance_to_element,
    filter_and_select,
    in_mask,
    load_candidates,
    synth_candidates,
)
from copa.ops.part_model import PartMask

from .conftest import rect_mask, surface_element, vector_element


def floor_point(u, v):
    """World point on z = 0 seen at pixel (u, v) by the overhead camera."""
    return np.array([(u - 160.0) / 500.0, -(v - 120.0) / 500.0, 0.0])


def candidate(point, score):
    return GraspCandidate(Pose(point, Rotation.from_euler("x", np.pi)), point, 0.05, 0.02, 0.02, score)


def brute_force(cands, mask, cam):
    best = None
    for index, c in enumerate(cands):
        u, v = project(c.grasp_point, cam)
        px, py = int(np.floor(u + 0.5)), int(np.floor(v + 0.5))
        if not (0 <= px < cam.width and 0 <= py < cam.height) or not mask.pixels[py, px]:
            continue
        if best is None or c.score > cands[best].score:
            best = index
    return best


masks = st.tuples(
    st.integers(0, 300), st.integers(5, 60), st.integers(0, 220), st.integers(5, 60),
).map(lambda r: (r[0], min(r[0] + r[1], 320), r[2], min(r[2] + r[3], 240)))
# fractions stay clear of the half-pixel rounding boundary
fractions = st.sampled_from([0.0, 0.2, 0.45, 0.55, 0.8])
pixels = st.tuples(
    st.builds(lambda i, f: i + f, st.integers(-10, 330), fractions),
    st.builds(lambda i, f: i + f, st.integers(-10, 250), fractions),
)
scored = st.lists(st.tuples(pixels, st.sampled_from([0.1, 0.5, 0.5, 0.9, 0.9])), min_size=1, max_size=25)


@given(masks, scored)
def test_selection_matches_brute_force(bounds, entries):
    cam = CameraModel.looking_at([0.0, 0.0, 1.0], [0.0, 0.0, 0.0], 500.0, 500.0, 320, 240,
                                 up=[0.0, 1.0, 0.0], name="overhead")
    u0, u1, v0, v1 = bounds
    mask = rect_mask(cam.shape, u0, u1, v0, v1)
    cands = [candidate(floor_point(u, v), score) for (u, v), score in entries]
    expected = brute_force(cands, mask, cam)
    if expected is None:
        with pytest.raises(NoCandidateInMask):
            filter_and_select(cands, mask, cam)
    else:
        selection = filter_and_select(cands, mask, cam)
        assert selection.chosen_index == expected
        assert selection.chosen is cands[expected]
        assert selection.total_count == len(cands)
        assert selection.in_mask_count == int(in_mask(cands, mask, cam).sum())


def test_ties_go_to_lowest_index(overhead_camera):
    mask = rect_mask(overhead_camera.shape, 100, 200, 80, 160)
    cands = [
        candidate(floor_point(10, 10), 0.99),
        candidate(floor_point(150, 100), 0.7),
        candidate(floor_point(160, 120), 0.7),
    ]
    selection = filter_and_select(cands, mask, overhead_camera)
    assert (selection.chosen_index, selection.in_mask_count, selection.total_count) == (1, 2, 3)


def test_rounds_to_nearest_pixel(overhead_camera):
    mask = rect_mask(overhead_camera.shape, 100, 120, 100, 120)
    inside = candidate(floor_point(99.6, 110), 0.5)
    outside = candidate(floor_point(119.6, 110), 0.5)
    assert list(in_mask([inside, outside], mask, overhead_camera)) == [True, False]


def test_behind_camera_is_never_in_mask(overhead_camera):
    mask = rect_mask(overhead_camera.shape, 0, 320, 0, 240)
    behind = candidate([0.0, 0.0, 2.0], 1.0)
    assert not in_mask([behind], mask, overhead_camera)[0]


def test_empty_candidates(overhead_camera):
    mask = rect_mask(overhead_camera.shape, 0, 50, 0, 50)
    with pytest.raises(EmptyCandidates) as info:
        filter_and_select([], mask, overhead_camera)
    assert info.value.exit_code == 4


def test_nothing_in_mask_is_a_grasp_failure(overhead_camera):
    mask = rect_mask(overhead_camera.shape, 0, 50, 0, 50)
    with pytest.raises(NoCandidateInMask) as info:
        filter_and_select([candidate(floor_point(200, 200), 0.9)], mask, overhead_camera)
    assert info.value.exit_code == 2
    assert isinstance(info.value, GraspFailure)
    assert not isinstance(info.value, InputError)


def test_load_candidates_keeps_order(tmp_path):
    cands = [candidate([0.1, 0.0, 0.1], 0.3), candidate([0.2, 0.0, 0.1], 0.8)]
    path = tmp_path / "candidates.json"
    path.write_text(json.dumps([c.to_model().model_dump(mode="json") for c in cands]))
    loaded = load_candidates(path)
    assert [c.score for c in loaded] == [0.3, 0.8]
    assert loaded[1].pose.almost_equal(cands[1].pose)


def test_load_candidates_names_bad_field(tmp_path):
    good = candidate([0.1, 0.0, 0.1], 0.3).to_model().model_dump(mode="json")
    bad = dict(good, score="high")
    path = tmp_path / "candidates.json"
    path.write_text(json.dumps([good, bad]))
    with pytest.raises(SchemaError) as info:
        load_candidates(path)
    assert info.value.field_path == "1.score"


def test_non_positive_width_is_rejected():
    with pytest.raises(SchemaError):
        GraspCandidate(Pose([0, 0, 0]), [0, 0, 0], 0.0, 0.02, 0.02, 0.5)


def test_distance_to_vector_element_uses_segment():
    element = vector_element(1, [0.0, 0.0, 0.0], [0.1, 0.0, 0.0])
    assert distance_to_element([0.05, 0.02, 0.0], element) == pytest.approx(0.02)
    assert distance_to_element([0.13, 0.0, 0.04], element) == pytest.approx(0.05)


def test_synthesized_candidates():
    element = vector_element(2, [0.5, 0.0, 0.1], [0.5, 0.2, 0.1])
    cands = synth_candidates(element, 4, seed=9, spread=0.004)
    assert len(cands) == 12
    distances = sorted(distance_to_element(c.grasp_point, element) for c in cands)
    assert all(d <= 0.004 + 1e-12 for d in distances[:4])
    assert all(d > 0.05 for d in distances[4:])
    # top-down approach along the handle's yaw
    for c in cands:
        np.testing.assert_allclose(c.pose.approach_axis, [0.0, 0.0, -1.0], atol=1e-12)
    again = synth_candidates(element, 4, seed=9, spread=0.004)
    assert [c.score for c in again] == [c.score for c in cands]


def test_synthesized_near_candidates_are_selectable(overhead_camera):
    surface = surface_element(5, floor_point(160, 120), [0.0, 0.0, 1.0])
    mask = PartMask(id=5, pixels=rect_mask(overhead_camera.shape, 140, 180, 100, 140).pixels)
    cands = synth_candidates(surface, 3, seed=1, spread=0.002)
    selection = filter_and_select(cands, mask, overhead_camera)
    assert distance_to_element(selection.chosen.grasp_point, surface) <= 0.002 + 1e-12
    assert selection.in_mask_count == 3
