import numpy as np
import pytest

from copa.common.errors import InputError
from copa.fixtures import FIXTURES, build_fixture, get_fixture, rasterize
from copa.fixtures.builder import quad
from copa.ops.geometry import back_project
from copa.ops.oracle import load_script
from copa.ops.scene import load_scene


def test_rasterized_depth_back_projects_onto_the_quad(overhead_camera):
    floor = quad([0.0, 0.0, 0.0], [0.1, 0.0, 0.0], [0.0, 0.1, 0.0], (255, 255, 255), part=1)
    depth, index = rasterize([floor], overhead_camera)
    hit = index == 0
    assert hit.any() and not hit.all()
    np.testing.assert_allclose(depth[hit], 1.0)
    assert (depth[~hit] == 0).all()
    cloud = back_project(depth, overhead_camera)
    np.testing.assert_allclose(cloud.points[:, 2], 0.0, atol=1e-12)
    assert np.abs(cloud.points[:, :2]).max() <= 0.1 + 1e-9


def test_nearer_quad_occludes(overhead_camera):
    far = quad([0.0, 0.0, 0.0], [0.2, 0.0, 0.0], [0.0, 0.2, 0.0], (0, 0, 0))
    near = quad([0.0, 0.0, 0.5], [0.02, 0.0, 0.0], [0.0, 0.02, 0.0], (0, 0, 0))
    depth, index = rasterize([far, near], overhead_camera)
    assert index[120, 160] == 1
    assert depth[120, 160] == pytest.approx(0.5)


def test_unknown_fixture():
    with pytest.raises(InputError):
        get_fixture("juggle")


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_built_fixture_is_loadable(fixture_dirs, name):
    manifest = fixture_dirs(name)
    scene = load_scene(manifest)
    fixture = get_fixture(name)
    assert {p.id for p in scene.parts()} >= set(fixture.part_ids)
    assert len(load_script(manifest.parent / "oracle.json")) == 5
    for part in scene.parts():
        assert part.area >= 20


def test_arm_part_is_optional(tmp_path):
    scene = load_scene(build_fixture("hammer", tmp_path, with_arm_part=False))
    assert [o.id for o in scene.objects] == [1, 2]
