"""Common package initialization."""
from .models import *
from .errors import *
from .config import CopaConfig, OracleConfig, PartModelConfig, PlanningConfig, SolverConfig
from .base_service import BaseCopaService
from .utils import (
    ensure_directory_exists, field_path_of, load_document, read_json,
    validate_document, write_document
)

__all__ = [
    # Models
    'ServiceStatus', 'StageName', 'PipelineMode', 'PartKind', 'GroundingPhase',
    'ScriptPhase', 'GripperState', 'PoseModel', 'TableModel', 'CameraModelSchema',
    'RLEMask', 'CameraEntry', 'PartEntry', 'ObjectEntry', 'SynthesizeSpec',
    'SceneManifest', 'GraspCandidateModel', 'GraspSelectionModel', 'ElementModel',
    'AnnotationDocument', 'AnnotationEntry', 'MotionPlanDocument',
    'SolveProblemDocument', 'SolveResultDocument', 'TrajectoryDocument',
    'PoseStepModel', 'GroundingRequestModel', 'GroundingResponseModel',
    'ConstraintRequestModel', 'ConstraintResponseModel', 'OracleScriptDocument',
    'OracleExchange', 'StageResponse', 'RunReport',

    # Errors
    'CopaError', 'InputError', 'ConstraintError', 'GraspFailure', 'StageError',

    # Config
    'CopaConfig', 'PartModelConfig', 'SolverConfig', 'PlanningConfig', 'OracleConfig',

    # Base service
    'BaseCopaService',

    # Utils
    'ensure_directory_exists', 'field_path_of', 'load_document', 'read_json',
    'validate_document', 'write_document',
]
