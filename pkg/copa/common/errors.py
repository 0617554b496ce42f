"""Typed errors shared by every copa module.

Each family carries the process exit code the CLI reports for it:
2 grasp failure, 3 constraint/solve failure, 4 input error.
"""
from typing import Any, Dict, List, Optional


class CopaError(Exception):
    """Base class for all copa errors."""

    exit_code = 1

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        """Serializable form used in run reports."""
        return {
            "type": type(self).__name__,
            "message": self.message,
            "details": self.details,
        }


# Input errors

class InputError(CopaError):
    exit_code = 4


class SchemaError(InputError):
    """A JSON document failed validation; ``field_path`` names the first bad field."""

    def __init__(self, message: str, field_path: str = "", details: Optional[Dict[str, Any]] = None):
        super().__init__(message, details)
        self.field_path = field_path
        self.details.setdefault("field_path", field_path)


class DuplicateKey(InputError):
    pass


class EmptyCloud(InputError):
    pass


class BehindCamera(InputError):
    pass


class DegenerateMask(InputError):
    pass


class DegenerateVector(InputError):
    pass


class NoDepth(InputError):
    pass


class TooFewPoints(InputError):
    pass


class NoConsensus(InputError):
    pass


class ScriptMiss(InputError):
    pass


class InvalidSelection(InputError):
    pass


class EmptyCandidates(InputError):
    pass


class InvalidProblem(InputError):
    pass


class RenderError(InputError):
    pass


# Constraint and solver errors

class ConstraintError(CopaError):
    exit_code = 3


class UnrecognizedTemplate(ConstraintError):
    def __init__(self, message: str, closest: Optional[str] = None):
        super().__init__(message, {"closest": closest})
        self.closest = closest


class BadUnit(ConstraintError):
    pass


class UnknownLabel(ConstraintError):
    pass


class KindMismatch(ConstraintError):
    pass


class UnresolvedReference(ConstraintError):
    pass


class ConstraintParseFailure(ConstraintError):
    def __init__(self, offending: List[str], reasons: Optional[List[str]] = None):
        super().__init__(
            f"{len(offending)} oracle sentence(s) could not be parsed",
            {"offending": list(offending), "reasons": list(reasons or [])},
        )
        self.offending = list(offending)


class NoConvergence(ConstraintError):
    """No start met the success test; ``result`` holds the best effort."""

    def __init__(self, result: Any):
        super().__init__(
            f"Solver did not converge (residual {result.residual:.6g})",
            {"residual": result.residual},
        )
        self.result = result


# Grasp errors

class GraspFailure(CopaError):
    exit_code = 2


class NoCandidateInMask(GraspFailure):
    pass


class StageError(CopaError):
    """Wraps an error raised inside a pipeline stage."""

    def __init__(self, stage: str, error: CopaError):
        super().__init__(f"[{stage}] {error.message}", dict(error.details))
        self.stage = stage
        self.error = error
        self.exit_code = error.exit_code

    def to_dict(self) -> Dict[str, Any]:
        data = self.error.to_dict()
        data["stage"] = self.stage
        return data
