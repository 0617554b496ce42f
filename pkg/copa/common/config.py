"""Configuration models for copa."""
import json
import os
from typing import Optional

from pydantic import BaseModel, Field, ValidationError

from .errors import SchemaError
from .utils import field_path_of


class PartModelConfig(BaseModel):
    """Part classification and fitting parameters."""
    aspect_threshold: float = Field(default=3.0, gt=1.0, description="Long/short side ratio above which a part is slender")
    ransac_threshold: float = Field(default=0.005, gt=0.0, description="RANSAC inlier distance in meters")
    ransac_iterations: int = Field(default=500, ge=1)
    ransac_min_points: int = Field(default=30, ge=3)
    min_inlier_ratio: float = Field(default=0.5, gt=0.0, le=1.0)
    endpoint_window: int = Field(default=5, ge=1, description="Odd window size for endpoint depth medians")
    min_depth_pixels: int = Field(default=10, ge=1)
    normal_tip_length: float = Field(default=0.05, gt=0.0)
    arm_overlap_limit: float = Field(default=0.5, ge=0.0, le=1.0)
    seed: int = 0


class SolverConfig(BaseModel):
    """SE(3) solver parameters."""
    random_starts: int = Field(default=8, ge=0)
    seed: int = 0
    tolerance: float = Field(default=1e-3, gt=0.0)
    max_iterations: int = Field(default=500, ge=1)
    refine: bool = True
    stop_at_first_success: bool = True


class PlanningConfig(BaseModel):
    """Post-grasp planning parameters."""
    max_step: float = Field(default=0.02, gt=0.0, description="Max waypoint spacing in meters")
    max_angle: Optional[float] = Field(default=None, gt=0.0, description="Max waypoint rotation in radians")
    above_offset: float = 0.05
    press_depth: float = 0.06
    pull_distance: float = 0.10


class OracleConfig(BaseModel):
    """Oracle client parameters."""
    timeout: float = Field(default=30.0, gt=0.0)


class CopaConfig(BaseModel):
    """Top-level configuration."""
    part_model: PartModelConfig = Field(default_factory=PartModelConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    planning: PlanningConfig = Field(default_factory=PlanningConfig)
    oracle: OracleConfig = Field(default_factory=OracleConfig)
    synth_seed: int = 0
    strict_kinds: bool = False
    render_overlays: bool = True

    def with_seed(self, seed: int) -> "CopaConfig":
        """Return a copy with every seed replaced."""
        return self.model_copy(update={
            "part_model": self.part_model.model_copy(update={"seed": seed}),
            "solver": self.solver.model_copy(update={"seed": seed}),
            "synth_seed": seed,
        })

    @classmethod
    def load(cls, path: Optional[str] = None) -> "CopaConfig":
        """Load a JSON config file (if given), then apply COPA_SEED."""
        config = cls()
        if path:
            try:
                with open(path, "r", encoding="utf-8") as f:
                    config = cls.model_validate(json.load(f))
            except (OSError, json.JSONDecodeError) as e:
                raise SchemaError(f"Cannot read config {path}: {e}")
            except ValidationError as e:
                raise SchemaError(f"Invalid config {path}", field_path=field_path_of(e))
        return config.apply_env()

    @classmethod
    def from_env(cls) -> "CopaConfig":
        return cls().apply_env()

    def apply_env(self) -> "CopaConfig":
        seed = os.environ.get("COPA_SEED")
        if seed is None or seed.strip() == "":
            return self
        try:
            return self.with_seed(int(seed))
        except ValueError:
            raise SchemaError(f"COPA_SEED must be an integer, got {seed!r}", field_path="COPA_SEED")

