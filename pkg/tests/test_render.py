import numpy as np
import pytest
from PIL import Image

from copa.common.errors import RenderError
from copa.common.models import PipelineMode, RunReport
from copa.ops.oracle import open_oracle
from copa.ops.scene import load_scene
from copa.ops.render import render_scene
from copa.orchestrator import CopaOrchestrator
from copa.services import TaskSpec


@pytest.fixture(scope="module")
def planned(fixture_dirs):
    manifest = fixture_dirs("hammer")
    scene = load_scene(manifest)
    task = TaskSpec("Hammer the nail.", open_oracle(str(manifest.parent / "oracle.json")))
    return scene, CopaOrchestrator().run(scene, task)


def test_report_without_elements(planned, tmp_path):
    scene, _ = planned
    with pytest.raises(RenderError):
        render_scene(scene, RunReport(instruction="Hammer the nail.", mode=PipelineMode.FULL), tmp_path)


def test_trajectory_layer_is_optional(planned, tmp_path):
    scene, report = planned
    with_path = render_scene(scene, report, tmp_path / "a")
    without_path = render_scene(scene, report.model_copy(update={"trajectory": None}), tmp_path / "b")
    assert [p.name for p in with_path] == [p.name for p in without_path] == ["overlay_front.png"]
    a = np.asarray(Image.open(with_path[0]).convert("RGB"))
    b = np.asarray(Image.open(without_path[0]).convert("RGB"))
    assert a.shape == b.shape == (480, 640, 3)
    assert (a != b).any()
