# copa orchestrator package
from .main import REPORT_FILE, TRAJECTORY_FILE, CopaOrchestrator, exit_code_of

__all__ = ["CopaOrchestrator", "REPORT_FILE", "TRAJECTORY_FILE", "exit_code_of"]
