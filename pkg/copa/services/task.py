"""The task a run plans for, shared by the stage services."""
from dataclasses import dataclass

from ..common.models import PipelineMode
from ..ops.oracle import Oracle
from ..ops.post_grasp import parse_rule_task


@dataclass
class TaskSpec:
    instruction: str
    oracle: Oracle
    mode: PipelineMode = PipelineMode.FULL

    def __post_init__(self):
        self.mode = PipelineMode(self.mode)
        if self.mode == PipelineMode.RULE_BASED:
            # raises InputError when no rule format fits
            parse_rule_task(self.instruction)

    @property
    def coarse_to_fine(self) -> bool:
        return self.mode != PipelineMode.NO_COARSE_TO_FINE
