from dataclasses import replace

import pytest

from copa.common.config import CopaConfig
from copa.common.errors import InputError, InvalidSelection, StageError
from copa.common.models import StageName, SynthesizeSpec
from copa.ops.oracle import AuditingOracle, open_oracle
from copa.ops.part_model import GeometricElement
from copa.ops.scene import load_scene
from copa.services import GraspService, MotionService, TaskSpec
from copa.services.grasp_service import visible_parts
from copa.services.grounding import ground_parts


@pytest.fixture
def scene(hammer_manifest):
    return load_scene(hammer_manifest)


@pytest.fixture
def oracle(hammer_manifest):
    return AuditingOracle(open_oracle(str(hammer_manifest.parent / "oracle.json")))


def test_arm_part_is_not_visible(scene):
    assert [p.id for p in visible_parts(scene, 0.5)] == [1, 2, 3]
    assert [p.id for p in visible_parts(scene, 1.0)] == [1, 2, 3, 9]


def test_coarse_to_fine_grounding(scene, oracle):
    parts = visible_parts(scene, 0.5)
    (part,) = ground_parts(oracle, scene, parts, StageName.GRASP, "Hammer the nail.", True, True)
    assert part.id == 2
    coarse, fine = oracle.log
    assert [c["id"] for c in fine.request["candidates"]] == [1, 2]
    assert coarse.request["image"] == "rgb.png"


def test_single_grounding_rejects_several_ids(scene, oracle):
    parts = visible_parts(scene, 0.5)
    with pytest.raises(InvalidSelection):
        ground_parts(oracle, scene, parts, StageName.MOTION, "Hammer the nail.", True, single=True)


def test_synthesized_candidates_from_manifest(scene):
    synth_scene = replace(scene, manifest=scene.manifest.model_copy(
        update={"grasp_candidates": SynthesizeSpec(n=3, seed=4, spread=0.002)}
    ))
    service = GraspService(CopaConfig())
    candidates = service.candidates_for(synth_scene, scene.part(2))
    assert len(candidates) == 9
    again = service.candidates_for(synth_scene, scene.part(2))
    assert [c.score for c in candidates] == [c.score for c in again]


def test_missing_candidate_source(scene):
    bare = replace(scene, manifest=scene.manifest.model_copy(update={"grasp_candidates": None}))
    with pytest.raises(InputError):
        GraspService(CopaConfig()).candidates_for(bare, scene.part(2))


def test_grasp_phase_wraps_errors(scene, oracle):
    task = TaskSpec("Knock twice.", oracle)
    with pytest.raises(StageError) as info:
        GraspService(CopaConfig()).run_grasp_phase(scene, task)
    assert info.value.stage == "grasp"
    assert info.value.exit_code == 4


def test_movable_parts(scene):
    service = MotionService(CopaConfig())
    assert service.movable_ids(scene, scene.part(2)) == {1, 2}
    nail_held = replace(scene, manifest=scene.manifest.model_copy(update={"movable_objects": [2]}))
    assert service.movable_ids(nail_held, scene.part(2)) == {3}


def test_motion_phase_records_context(scene, oracle):
    grasp = GraspService(CopaConfig()).run_grasp_phase(scene, TaskSpec("Hammer the nail.", oracle))
    motion = MotionService(CopaConfig())
    result = motion.run_motion_phase(scene, TaskSpec("Hammer the nail.", oracle), grasp.pose, grasp.grasp_part)
    assert len(result.steps) == 2
    assert result.solve_calls == 1
    assert sorted(e.id for e in motion.context.elements) == [1, 2, 3]
    assert all(isinstance(e, GeometricElement) for e in result.elements)
    assert result.response.success
    assert result.response.stage == StageName.MOTION
