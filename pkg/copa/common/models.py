"""Common models and schemas for copa documents."""
from enum import Enum
from typing import Annotated, Any, Dict, List, Optional, Union

from pydantic import BaseModel, Field

ORACLE_SCHEMA = "copa-oracle/v1"
SCENE_SCHEMA = "copa-scene/v1"
REPORT_SCHEMA = "copa-report/v1"

FiniteFloat = Annotated[float, Field(allow_inf_nan=False)]
Vec3List = Annotated[List[FiniteFloat], Field(min_length=3, max_length=3)]
QuatList = Annotated[List[FiniteFloat], Field(min_length=4, max_length=4)]
PixelList = Annotated[List[float], Field(min_length=2, max_length=2)]
PositiveFloat = Annotated[float, Field(gt=0.0, allow_inf_nan=False)]


class ServiceStatus(str, Enum):
    """Service status enumeration."""
    HEALTHY = "healthy"
    UNHEALTHY = "unhealthy"
    STARTING = "starting"
    STOPPING = "stopping"


class StageName(str, Enum):
    """Pipeline stages."""
    GRASP = "grasp"
    MOTION = "motion"
    ORACLE = "oracle"
    RENDER = "render"


class PipelineMode(str, Enum):
    """Pipeline modes: full system and the two ablations."""
    FULL = "full"
    NO_COARSE_TO_FINE = "no-c2f"
    RULE_BASED = "rule"


class PartKind(str, Enum):
    """Geometric model chosen for a part."""
    SLENDER = "slender"
    SURFACE = "surface"


class GroundingPhase(str, Enum):
    COARSE_OBJECT = "coarse_object"
    FINE_PART = "fine_part"


class ScriptPhase(str, Enum):
    COARSE_OBJECT = "coarse_object"
    FINE_PART = "fine_part"
    CONSTRAINTS = "constraints"


class GripperState(str, Enum):
    HOLD = "hold"
    OPEN = "open"


# Geometry

class PoseModel(BaseModel):
    """Pose / rigid transform wire form."""
    position: Vec3List
    orientation_xyzw: QuatList = Field(default_factory=lambda: [0.0, 0.0, 0.0, 1.0])


class TableModel(BaseModel):
    point: Vec3List = Field(default_factory=lambda: [0.5, 0.0, 0.07])
    normal: Vec3List = Field(default_factory=lambda: [0.0, 0.0, 1.0])


class CameraModelSchema(BaseModel):
    """Pinhole camera wire form; extrinsics map world to camera."""
    fx: PositiveFloat
    fy: PositiveFloat
    cx: FiniteFloat
    cy: FiniteFloat
    width: int = Field(..., gt=0)
    height: int = Field(..., gt=0)
    extrinsics: PoseModel = Field(default_factory=lambda: PoseModel(position=[0.0, 0.0, 0.0]))


class RLEMask(BaseModel):
    """Row-major run lengths, alternating false/true, starting with false."""
    size: Annotated[List[int], Field(min_length=2, max_length=2)]
    counts: List[Annotated[int, Field(ge=0)]]


MaskSource = Union[str, RLEMask]


# Scene manifest

class CameraEntry(CameraModelSchema):
    name: str = "camera"
    depth: str = Field(..., description="Depth image path (.npy meters, or 16-bit PNG scaled by depth_scale)")
    depth_scale: PositiveFloat = 1.0
    rgb: Optional[str] = None
    arm_mask: Optional[MaskSource] = None


class PartEntry(BaseModel):
    id: int = Field(..., ge=0)
    name: Optional[str] = None
    camera: Optional[str] = None
    mask: MaskSource


class ObjectEntry(BaseModel):
    id: int = Field(..., ge=0)
    name: str
    parts: List[PartEntry] = Field(default_factory=list)


class SynthesizeSpec(BaseModel):
    """Synthesize candidates around the grounded grasping part."""
    n: int = Field(default=5, ge=1)
    seed: Optional[int] = None
    spread: PositiveFloat = 0.008


class SceneManifest(BaseModel):
    version: str = SCENE_SCHEMA
    cameras: List[CameraEntry] = Field(..., min_length=1)
    objects: List[ObjectEntry] = Field(default_factory=list)
    arm_reference: Optional[Vec3List] = None
    robot_base: Optional[PoseModel] = None
    grasp_candidates: Optional[Union[str, SynthesizeSpec]] = None
    table: Optional[TableModel] = None
    movable_objects: Optional[List[int]] = None
    post_grasp_observation: Optional[str] = None


# Grasping

class GraspCandidateModel(BaseModel):
    pose: PoseModel
    grasp_point: Vec3List
    width: PositiveFloat
    height: PositiveFloat
    depth: PositiveFloat
    score: FiniteFloat


class GraspSelectionModel(BaseModel):
    chosen: GraspCandidateModel
    chosen_index: int
    in_mask_count: int
    total_count: int


# Part elements

class VectorElementModel(BaseModel):
    endpoint_near: Vec3List
    endpoint_far: Vec3List
    anchor_point: Vec3List
    direction: Vec3List


class SurfaceElementModel(BaseModel):
    center: Vec3List
    normal: Vec3List
    inlier_count: int = Field(..., ge=0)


class ElementModel(BaseModel):
    id: int
    name: Optional[str] = None
    kind: PartKind
    object_id: Optional[int] = None
    camera: Optional[str] = None
    vector: Optional[VectorElementModel] = None
    surface: Optional[SurfaceElementModel] = None


class AnnotationEntry(BaseModel):
    id: int
    name: Optional[str] = None
    kind: PartKind
    segment: Optional[List[PixelList]] = None
    center: Optional[PixelList] = None
    normal_tip: Optional[PixelList] = None
    label_anchor: PixelList


class AnnotationDocument(BaseModel):
    camera: str = "camera"
    width: int = 0
    height: int = 0
    entries: List[AnnotationEntry] = Field(default_factory=list)


# Planning

class MotionPlanDocument(BaseModel):
    constraints: List[str] = Field(default_factory=list)
    actions: List[str] = Field(default_factory=list)


class SolveProblemDocument(BaseModel):
    elements: List[ElementModel]
    movable: List[int]
    constraints: List[str]
    table: Optional[TableModel] = None


class ConstraintLossModel(BaseModel):
    constraint: str
    loss: float


class SolveResultDocument(BaseModel):
    transform: PoseModel
    residual: float
    converged: bool
    losses: List[ConstraintLossModel] = Field(default_factory=list)
    iterations: int = 0
    restarts_used: int = 0
    start_losses: List[float] = Field(default_factory=list)


class PoseStepModel(BaseModel):
    pose: PoseModel
    gripper: GripperState
    provenance: str


class TrajectoryDocument(BaseModel):
    steps: List[PoseStepModel] = Field(default_factory=list)
    waypoints: List[PoseModel] = Field(default_factory=list)


# Oracle protocol

class CandidateLabel(BaseModel):
    id: int
    name: Optional[str] = None


class GroundingRequestModel(BaseModel):
    schema_version: str = ORACLE_SCHEMA
    stage: Optional[StageName] = None
    phase: GroundingPhase
    instruction: str
    image: str = ""
    candidates: List[CandidateLabel] = Field(..., min_length=1)


class GroundingResponseModel(BaseModel):
    schema_version: str = ORACLE_SCHEMA
    ids: List[int]


class ElementSummary(BaseModel):
    id: int
    kind: PartKind
    name: Optional[str] = None


class ConstraintRequestModel(BaseModel):
    schema_version: str = ORACLE_SCHEMA
    instruction: str
    image: str = ""
    elements: List[ElementSummary] = Field(..., min_length=1)


class ConstraintResponseModel(BaseModel):
    schema_version: str = ORACLE_SCHEMA
    constraints: List[str] = Field(default_factory=list)
    actions: List[str] = Field(default_factory=list)


class OracleScriptEntry(BaseModel):
    phase: ScriptPhase
    instruction: str
    stage: Optional[StageName] = None
    response: Dict[str, Any]


class OracleScriptDocument(BaseModel):
    schema_version: str = ORACLE_SCHEMA
    entries: List[OracleScriptEntry] = Field(default_factory=list)


class OracleExchange(BaseModel):
    index: int
    kind: str
    request: Dict[str, Any]
    response: Dict[str, Any]


# Services and reports

class ServiceInfo(BaseModel):
    """Service information model."""
    service_id: str
    name: str
    version: str
    description: str
    stage: StageName
    host: str
    port: int
    status: ServiceStatus
    endpoints: List[str]


class HealthCheckResponse(BaseModel):
    """Health check response model."""
    service_id: str
    status: ServiceStatus
    timestamp: str
    uptime_seconds: float
    version: str
    details: Optional[Dict[str, Any]] = None


class StageResponse(BaseModel):
    """Outcome envelope produced by every stage service."""
    success: bool
    stage: StageName
    message: str
    processing_time_ms: Optional[float] = None
    metadata: Optional[Dict[str, Any]] = None
    error_details: Optional[Dict[str, Any]] = None


class RunReport(BaseModel):
    schema_version: str = REPORT_SCHEMA
    instruction: str
    mode: PipelineMode
    seed: int = 0
    success: bool = False
    grasp: Optional[GraspSelectionModel] = None
    grasp_part: Optional[int] = None
    elements: List[ElementModel] = Field(default_factory=list)
    annotation: Optional[AnnotationDocument] = None
    plan: Optional[MotionPlanDocument] = None
    solve: Optional[SolveResultDocument] = None
    solve_calls: int = 0
    trajectory: Optional[TrajectoryDocument] = None
    oracle_log: List[OracleExchange] = Field(default_factory=list)
    stages: List[StageResponse] = Field(default_factory=list)
    error: Optional[Dict[str, Any]] = None
    timing: Dict[str, float] = Field(default_factory=dict)
