"""
The grounding / constraint-generation oracle.

Every implementation speaks the versioned ``copa-oracle/v1`` request and
response models. The scripted oracle answers from a JSON script keyed by
(stage, phase, instruction); entries without a stage answer for any stage.
"""
import logging
import threading
from abc import ABC, abstractmethod
from typing import Dict, List, Optional, Tuple

import httpx
from pydantic import BaseModel

from ..common import errors as copa_errors
from ..common.errors import CopaError, DuplicateKey, InputError, InvalidSelection, ScriptMiss
from ..common.models import (
    ConstraintRequestModel, ConstraintResponseModel, GroundingRequestModel,
    GroundingResponseModel, OracleExchange, OracleScriptDocument, RunReport, ScriptPhase,
    StageName
)
from ..common.utils import read_json, validate_document

logger = logging.getLogger(__name__)

ScriptKey = Tuple[Optional[str], str, str]


def normalize_instruction(text: str) -> str:
    return " ".join(text.split())


def check_selection(req: GroundingRequestModel, resp: GroundingResponseModel) -> GroundingResponseModel:
    """Every selected id must be one of the request's candidates."""
    allowed = {c.id for c in req.candidates}
    bad = [i for i in resp.ids if i not in allowed]
    if bad:
        raise InvalidSelection(
            f"oracle selected {bad}, candidates were {sorted(allowed)}",
            {"selected": resp.ids, "candidates": sorted(allowed)},
        )
    if not resp.ids:
        raise InvalidSelection("oracle selected nothing", {"candidates": sorted(allowed)})
    return resp


class Oracle(ABC):
    """Answers grounding and constraint-generation requests."""

    @abstractmethod
    def ground(self, req: GroundingRequestModel) -> GroundingResponseModel:
        pass

    @abstractmethod
    def generate_constraints(self, req: ConstraintRequestModel) -> ConstraintResponseModel:
        pass


class OracleScript:
    """Immutable canned responses."""

    def __init__(self, entries: Dict[ScriptKey, dict]):
        self._entries = dict(entries)

    def __len__(self) -> int:
        return len(self._entries)

    @classmethod
    def from_document(cls, doc: OracleScriptDocument) -> "OracleScript":
        entries: Dict[ScriptKey, dict] = {}
        for index, entry in enumerate(doc.entries):
            stage = entry.stage.value if entry.stage else None
            key = (stage, entry.phase.value, normalize_instruction(entry.instruction))
            if key in entries:
                raise DuplicateKey(
                    f"script entry {index} repeats ({stage or 'any stage'}, {key[1]}, '{key[2]}')",
                    {"index": index},
                )
            entries[key] = entry.response
        return cls(entries)

    def lookup(self, stage: Optional[StageName], phase: ScriptPhase, instruction: str) -> dict:
        instruction = normalize_instruction(instruction)
        phase = ScriptPhase(phase.value if hasattr(phase, "value") else phase).value
        stage_value = stage.value if stage else None
        for key in ((stage_value, phase, instruction), (None, phase, instruction)):
            if key in self._entries:
                return self._entries[key]
        raise ScriptMiss(
            f"no script entry for ({stage_value or 'any stage'}, {phase}, '{instruction}')",
            {"stage": stage_value, "phase": phase, "instruction": instruction},
        )


def load_script(path) -> OracleScript:
    """
    Raises:
        SchemaError: malformed JSON or schema violation
        DuplicateKey: two entries with the same key
    """
    doc = validate_document(OracleScriptDocument, read_json(path), source=str(path))
    script = OracleScript.from_document(doc)
    logger.info(f"Loaded oracle script {path} with {len(script)} entries")
    return script


class ScriptedOracle(Oracle):
    def __init__(self, script: OracleScript):
        self.script = script

    def ground(self, req: GroundingRequestModel) -> GroundingResponseModel:
        data = self.script.lookup(req.stage, ScriptPhase(req.phase.value), req.instruction)
        resp = validate_document(GroundingResponseModel, data, source="script response")
        return check_selection(req, resp)

    def generate_constraints(self, req: ConstraintRequestModel) -> ConstraintResponseModel:
        data = self.script.lookup(None, ScriptPhase.CONSTRAINTS, req.instruction)
        return validate_document(ConstraintResponseModel, data, source="script response")


class AuditingOracle(Oracle):
    """Records every exchange with the wrapped oracle."""

    def __init__(self, inner: Oracle):
        self.inner = inner
        self.log: List[OracleExchange] = []
        self._lock = threading.Lock()

    def _record(self, kind: str, req: BaseModel, resp: BaseModel) -> None:
        with self._lock:
            self.log.append(OracleExchange(
                index=len(self.log), kind=kind,
                request=req.model_dump(mode="json"), response=resp.model_dump(mode="json"),
            ))

    def ground(self, req: GroundingRequestModel) -> GroundingResponseModel:
        resp = check_selection(req, self.inner.ground(req))
        self._record("ground", req, resp)
        return resp

    def generate_constraints(self, req: ConstraintRequestModel) -> ConstraintResponseModel:
        resp = self.inner.generate_constraints(req)
        self._record("constraints", req, resp)
        return resp

    @property
    def grounding_calls(self) -> int:
        return sum(1 for e in self.log if e.kind == "ground")


class ReplayOracle(Oracle):
    """Answers from a recorded audit log, in order."""

    def __init__(self, exchanges: List[OracleExchange]):
        self._exchanges = list(exchanges)
        self._next = 0
        self._lock = threading.Lock()

    @classmethod
    def from_report(cls, path) -> "ReplayOracle":
        report = validate_document(RunReport, read_json(path), source=str(path))
        return cls(report.oracle_log)

    def _take(self, kind: str, req: BaseModel) -> dict:
        with self._lock:
            if self._next >= len(self._exchanges):
                raise ScriptMiss(f"replay log exhausted after {len(self._exchanges)} exchanges")
            exchange = self._exchanges[self._next]
            if exchange.kind != kind or exchange.request != req.model_dump(mode="json"):
                raise ScriptMiss(
                    f"request {self._next} does not match the recorded {exchange.kind} exchange",
                    {"index": self._next},
                )
            self._next += 1
            return exchange.response

    def ground(self, req: GroundingRequestModel) -> GroundingResponseModel:
        resp = validate_document(GroundingResponseModel, self._take("ground", req), source="replay")
        return check_selection(req, resp)

    def generate_constraints(self, req: ConstraintRequestModel) -> ConstraintResponseModel:
        return validate_document(ConstraintResponseModel, self._take("constraints", req), source="replay")


class HTTPOracle(Oracle):
    """Client for an oracle served at ``POST /ground`` and ``POST /constraints``."""

    def __init__(self, base_url: str, timeout: float = 30.0, client: Optional[httpx.Client] = None):
        self.base_url = base_url.rstrip("/")
        self.client = client or httpx.Client(base_url=self.base_url, timeout=timeout)

    def _post(self, path: str, req: BaseModel) -> dict:
        try:
            response = self.client.post(path, json=req.model_dump(mode="json"))
        except httpx.HTTPError as e:
            raise InputError(f"oracle at {self.base_url} unreachable: {e}", {"url": self.base_url})
        if response.status_code >= 400:
            raise _error_from_response(response)
        return response.json()

    def ground(self, req: GroundingRequestModel) -> GroundingResponseModel:
        resp = validate_document(GroundingResponseModel, self._post("/ground", req), source="oracle")
        return check_selection(req, resp)

    def generate_constraints(self, req: ConstraintRequestModel) -> ConstraintResponseModel:
        return validate_document(ConstraintResponseModel, self._post("/constraints", req), source="oracle")

    def close(self) -> None:
        self.client.close()


def _error_from_response(response: httpx.Response) -> CopaError:
    try:
        detail = response.json().get("detail", {})
    except ValueError:
        detail = {}
    if not isinstance(detail, dict):
        detail = {"message": str(detail)}
    message = detail.get("message", f"oracle returned HTTP {response.status_code}")
    error_class = getattr(copa_errors, str(detail.get("type", "")), None)
    if isinstance(error_class, type) and issubclass(error_class, (ScriptMiss, InvalidSelection, DuplicateKey)):
        return error_class(message, detail.get("details"))
    return InputError(message, {"status": response.status_code})


def open_oracle(source: str, timeout: float = 30.0) -> Oracle:
    """An HTTP endpoint, a script file, or a previous run report to replay."""
    if source.startswith(("http://", "https://")):
        return HTTPOracle(source, timeout=timeout)
    data = read_json(source)
    if isinstance(data, dict) and "oracle_log" in data:
        logger.info(f"Replaying oracle log from {source}")
        report = validate_document(RunReport, data, source=source)
        return ReplayOracle(report.oracle_log)
    doc = validate_document(OracleScriptDocument, data, source=source)
    return ScriptedOracle(OracleScript.from_document(doc))
