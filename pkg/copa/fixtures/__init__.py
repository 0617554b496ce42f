# Synthetic task scenes
from .builder import FIXTURES, Fixture, build_fixture, fixture_camera, get_fixture, rasterize

__all__ = ["FIXTURES", "Fixture", "build_fixture", "fixture_camera", "get_fixture", "rasterize"]
