import json
import shutil

import numpy as np
import pytest
from PIL import Image

from copa.common.errors import DuplicateKey, InputError, SchemaError
from copa.common.models import RLEMask
from copa.ops.scene import load_scene
from copa.utils.file_ops import decode_rle, encode_rle, load_depth, load_mask


@pytest.fixture
def scene_dir(hammer_manifest, tmp_path):
    target = tmp_path / "scene"
    shutil.copytree(hammer_manifest.parent, target)
    return target


def edit_manifest(scene_dir, change):
    path = scene_dir / "manifest.json"
    data = json.loads(path.read_text())
    change(data)
    path.write_text(json.dumps(data))
    return path


def test_load_hammer_scene(hammer_manifest):
    scene = load_scene(hammer_manifest)
    assert list(scene.views) == ["front"]
    assert [o.id for o in scene.objects] == [1, 2, 9]
    assert [p.id for p in scene.parts()] == [1, 2, 3, 9]
    assert scene.part(2).name == "handle"
    assert scene.part(2).camera == "front"
    assert scene.object_of(3).name == "nail"
    np.testing.assert_allclose(scene.arm_reference, [0.0, -0.4, 0.07])
    np.testing.assert_allclose(scene.table.point, [0.5, 0.0, 0.07])
    assert scene.candidate_source == hammer_manifest.parent / "candidates.json"
    assert scene.observation is scene
    assert scene.image_ref() == "rgb.png"
    assert scene.default_view.arm_mask is not None


def test_unknown_part(hammer_manifest):
    with pytest.raises(InputError):
        load_scene(hammer_manifest).part(42)


def test_duplicate_part_ids(scene_dir):
    def duplicate(data):
        data["objects"][1]["parts"][0]["id"] = 1

    with pytest.raises(DuplicateKey):
        load_scene(edit_manifest(scene_dir, duplicate))


def test_duplicate_object_ids(scene_dir):
    def duplicate(data):
        data["objects"][1]["id"] = 1

    with pytest.raises(DuplicateKey):
        load_scene(edit_manifest(scene_dir, duplicate))


def test_mask_resolution_must_match_camera(scene_dir):
    def shrink(data):
        data["objects"][0]["parts"][0]["mask"] = {"size": [10, 10], "counts": [50, 50]}

    with pytest.raises(SchemaError):
        load_scene(edit_manifest(scene_dir, shrink))


def test_unknown_camera(scene_dir):
    def rename(data):
        data["objects"][0]["parts"][0]["camera"] = "side"

    with pytest.raises(SchemaError):
        load_scene(edit_manifest(scene_dir, rename))


def test_schema_error_names_field(scene_dir):
    def break_fx(data):
        data["cameras"][0]["fx"] = -1

    with pytest.raises(SchemaError) as info:
        load_scene(edit_manifest(scene_dir, break_fx))
    assert info.value.field_path == "cameras.0.fx"


def test_missing_depth_file(scene_dir):
    (scene_dir / "depth.npy").unlink()
    with pytest.raises(InputError):
        load_scene(scene_dir / "manifest.json")


def test_post_grasp_observation(scene_dir):
    shutil.copy(scene_dir / "manifest.json", scene_dir / "after.json")

    def link(data):
        data["post_grasp_observation"] = "after.json"

    scene = load_scene(edit_manifest(scene_dir, link))
    assert scene.observation is scene.post_grasp
    assert scene.post_grasp.post_grasp is None


@pytest.mark.parametrize("mask", [
    np.zeros((3, 4), dtype=bool),
    np.ones((3, 4), dtype=bool),
    np.array([[1, 0, 0, 1], [1, 1, 0, 0], [0, 0, 0, 1]], dtype=bool),
])
def test_rle_round_trip(mask):
    rle = encode_rle(mask)
    assert rle.size == [3, 4]
    assert sum(rle.counts) == 12
    assert np.array_equal(decode_rle(rle), mask)


def test_rle_starts_with_background_run():
    assert encode_rle(np.array([[1, 1, 0]], dtype=bool)).counts == [0, 2, 1]


def test_rle_counts_must_cover_image():
    with pytest.raises(SchemaError):
        decode_rle(RLEMask(size=[2, 2], counts=[1, 2]))


def test_png_depth_is_scaled(tmp_path):
    raw = np.array([[1000, 0], [250, 65535]], dtype=np.uint16)
    Image.fromarray(raw).save(tmp_path / "depth.png")
    depth = load_depth("depth.png", 0.001, tmp_path)
    np.testing.assert_allclose(depth, [[1.0, 0.0], [0.25, 65.535]])


def test_png_mask_is_nonzero(tmp_path):
    Image.fromarray(np.array([[0, 7], [255, 0]], dtype=np.uint8)).save(tmp_path / "m.png")
    assert load_mask(tmp_path / "m.png").tolist() == [[False, True], [True, False]]
    with pytest.raises(SchemaError):
        load_mask(tmp_path / "m.png", shape=(3, 3))
