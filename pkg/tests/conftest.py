import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from copa.common.config import CopaConfig
from copa.fixtures import build_fixture, fixture_camera
from copa.ops.geometry import CameraModel
from copa.ops.part_model import GeometricElement, PartMask, SurfaceElement, VectorElement

settings.register_profile("ci", max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("dev", max_examples=50, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "dev"))


@pytest.fixture
def camera() -> CameraModel:
    return fixture_camera()


@pytest.fixture
def overhead_camera() -> CameraModel:
    """Looking straight down at the origin from 1 m."""
    return CameraModel.looking_at([0.0, 0.0, 1.0], [0.0, 0.0, 0.0], 500.0, 500.0, 320, 240,
                                  up=[0.0, 1.0, 0.0], name="overhead")


@pytest.fixture
def config() -> CopaConfig:
    return CopaConfig()


@pytest.fixture(autouse=True)
def _no_seed_override(monkeypatch):
    monkeypatch.delenv("COPA_SEED", raising=False)


@pytest.fixture(scope="session")
def fixture_dirs(tmp_path_factory):
    """Builds each shipped fixture once per session."""
    built = {}

    def get(name: str):
        if name not in built:
            built[name] = build_fixture(name, tmp_path_factory.mktemp(name))
        return built[name]

    return get


@pytest.fixture
def hammer_manifest(fixture_dirs):
    return fixture_dirs("hammer")


def rect_mask(shape, u0, u1, v0, v1, part_id=1, **kwargs) -> PartMask:
    pixels = np.zeros(shape, dtype=bool)
    pixels[v0:v1, u0:u1] = True
    return PartMask(id=part_id, pixels=pixels, **kwargs)


def vector_element(id, near, far, **kwargs) -> GeometricElement:
    return GeometricElement.of_vector(id, VectorElement.from_endpoints(near, far), **kwargs)


def surface_element(id, center, normal, **kwargs) -> GeometricElement:
    return GeometricElement.of_surface(id, SurfaceElement(center, normal, 100), **kwargs)
