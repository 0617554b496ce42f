# copa stage services
from .grasp_service import GraspPhaseResult, GraspService
from .motion_service import MotionPhaseResult, MotionService
from .oracle_service import OracleService
from .task import TaskSpec

__all__ = [
    "GraspPhaseResult", "GraspService", "MotionPhaseResult", "MotionService",
    "OracleService", "TaskSpec",
]
