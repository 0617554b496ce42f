"""Base stage service with common functionality."""
import logging
import time
import uuid
from abc import ABC, abstractmethod
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from .config import CopaConfig
from .errors import CopaError, StageError
from .models import HealthCheckResponse, ServiceInfo, ServiceStatus, StageName, StageResponse


class BaseCopaService(ABC):
    """Base class for copa pipeline stages.

    A service owns a named logger, its configuration and the response
    envelope. Services that are exposed over HTTP (the oracle) also build
    a FastAPI app through ``create_app``.
    """

    def __init__(
        self,
        service_name: str,
        stage: StageName,
        config: Optional[CopaConfig] = None,
        host: str = "localhost",
        port: int = 8100,
        version: str = "1.0.0"
    ):
        self.service_id = f"{service_name}-{uuid.uuid4().hex[:8]}"
        self.service_name = service_name
        self.stage = stage
        self.config = config or CopaConfig.from_env()
        self.host = host
        self.port = port
        self.version = version
        self.start_time = time.time()
        self.status = ServiceStatus.STARTING
        self.logger = logging.getLogger(f"copa-{service_name}")
        self.app: Optional[FastAPI] = None
        self.status = ServiceStatus.HEALTHY

    def create_app(self) -> FastAPI:
        """Build the FastAPI app with the common and service-specific routes."""
        app = FastAPI(
            title=f"copa {self.service_name} service",
            description=f"copa {self.stage.value} stage",
            version=self.version
        )
        app.add_middleware(
            CORSMiddleware,
            allow_origins=["*"],
            allow_credentials=True,
            allow_methods=["*"],
            allow_headers=["*"],
        )

        @app.get("/health", response_model=HealthCheckResponse)
        async def health_check():
            """Health check endpoint."""
            return self.health()

        @app.get("/info", response_model=ServiceInfo)
        async def service_info():
            """Get service information."""
            return self.info()

        self._register_service_routes(app)
        self.app = app
        return app

    def _register_service_routes(self, app: FastAPI) -> None:
        """Register service-specific routes. Stage-only services have none."""

    @abstractmethod
    def _get_service_endpoints(self) -> List[str]:
        """Operations (or HTTP endpoints) the service provides."""
        return []

    def health(self) -> HealthCheckResponse:
        return HealthCheckResponse(
            service_id=self.service_id,
            status=self.status,
            timestamp=datetime.now(timezone.utc).isoformat(),
            uptime_seconds=time.time() - self.start_time,
            version=self.version,
            details={"service_name": self.service_name, "stage": self.stage.value},
        )

    def info(self) -> ServiceInfo:
        return ServiceInfo(
            service_id=self.service_id,
            name=self.service_name,
            version=self.version,
            description=f"copa {self.service_name} service",
            stage=self.stage,
            host=self.host,
            port=self.port,
            status=self.status,
            endpoints=["/health", "/info"] + self._get_service_endpoints(),
        )

    def create_response(
        self,
        success: bool,
        message: str,
        processing_time_ms: Optional[float] = None,
        metadata: Optional[Dict[str, Any]] = None,
        error_details: Optional[Dict[str, Any]] = None
    ) -> StageResponse:
        """Create a standardized stage response."""
        return StageResponse(
            success=success,
            stage=self.stage,
            message=message,
            processing_time_ms=processing_time_ms,
            metadata=metadata,
            error_details=error_details
        )

    def stage_error(self, error: CopaError) -> StageError:
        """Wrap an error with this service's stage name."""
        if isinstance(error, StageError):
            return error
        self.logger.error(f"{self.stage.value} stage failed: {error.message}")
        return StageError(self.stage.value, error)

    def run(self, host: Optional[str] = None, port: Optional[int] = None):
        """Serve the service over HTTP."""
        import uvicorn

        host = host or self.host
        port = port or self.port
        app = self.app or self.create_app()

        self.logger.info(f"Starting {self.service_name} service on {host}:{port}")

        uvicorn.run(
            app,
            host=host,
            port=port,
            log_level="info"
        )
