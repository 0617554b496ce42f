"""Oracle HTTP service."""
from typing import List, Optional

from fastapi import FastAPI, HTTPException

from ..common import BaseCopaService, CopaConfig, CopaError, StageName
from ..common.errors import InvalidSelection, ScriptMiss
from ..common.models import (
    ConstraintRequestModel, ConstraintResponseModel, GroundingRequestModel, GroundingResponseModel
)
from ..ops.oracle import Oracle


def _status_for(error: CopaError) -> int:
    if isinstance(error, ScriptMiss):
        return 404
    if isinstance(error, InvalidSelection):
        return 422
    return 400


class OracleService(BaseCopaService):
    """Serves any oracle over HTTP using the copa-oracle/v1 schema."""

    def __init__(self, oracle: Oracle, config: Optional[CopaConfig] = None,
                 host: str = "localhost", port: int = 8100):
        super().__init__(
            service_name="oracle",
            stage=StageName.ORACLE,
            config=config,
            host=host,
            port=port,
        )
        self.oracle = oracle

    def _get_service_endpoints(self) -> List[str]:
        return ["/ground", "/constraints"]

    def _http_error(self, error: CopaError) -> HTTPException:
        self.logger.warning(f"Oracle request failed: {error.message}")
        return HTTPException(status_code=_status_for(error), detail=error.to_dict())

    def _register_service_routes(self, app: FastAPI) -> None:
        """Register oracle routes."""

        @app.post("/ground", response_model=GroundingResponseModel)
        def ground(request: GroundingRequestModel):
            """Select object or part ids for an instruction."""
            try:
                response = self.oracle.ground(request)
            except CopaError as e:
                raise self._http_error(e)
            self.logger.info(
                f"Grounded '{request.instruction}' ({request.phase.value}) to {response.ids}"
            )
            return response

        @app.post("/constraints", response_model=ConstraintResponseModel)
        def constraints(request: ConstraintRequestModel):
            """Generate constraint and action sentences over labeled elements."""
            try:
                response = self.oracle.generate_constraints(request)
            except CopaError as e:
                raise self._http_error(e)
            self.logger.info(
                f"Generated {len(response.constraints)} constraint(s) and "
                f"{len(response.actions)} action(s) for '{request.instruction}'"
            )
            return response
