"""FastAPI application factory for the read-only inspection service."""

import time
from collections.abc import AsyncIterator, Awaitable, Callable
from contextlib import asynccontextmanager

import structlog
from fastapi import FastAPI, Request, Response

from pofl_sim import __version__
from pofl_sim.config import Settings, get_settings
from pofl_sim.logging import setup_logging
from pofl_sim.routes import api_router
from pofl_sim.serialization import ORJSONResponse
from pofl_sim.store import ReportStore

logger = structlog.stdlib.get_logger()


@asynccontextmanager
async def lifespan(app: FastAPI) -> AsyncIterator[None]:
    """Open the report store on startup."""
    settings: Settings = app.state.settings
    setup_logging(settings.app_env, settings.log_level)

    store = ReportStore(db_path=settings.db_file)
    await store.init_db()
    if await store.load_from_db():
        await logger.ainfo("reports_loaded")
    app.state.store = store
    app.state.start_time = time.monotonic()

    await logger.ainfo("app_started", env=settings.app_env.value)
    yield
    await logger.ainfo("app_shutdown")


def create_app(settings: Settings | None = None) -> FastAPI:
    """Create and configure the FastAPI application."""
    if settings is None:
        settings = get_settings()

    app = FastAPI(
        title="PoFL Simulator",
        description="Chain and round reports of a PoFL simulation run",
        version=__version__,
        default_response_class=ORJSONResponse,
        lifespan=lifespan,
    )
    app.state.settings = settings

    @app.middleware("http")
    async def add_response_time(
        request: Request,
        call_next: Callable[[Request], Awaitable[Response]],
    ) -> Response:
        """Add X-Response-Time header to every response."""
        start = time.monotonic()
        response = await call_next(request)
        elapsed_ms = round((time.monotonic() - start) * 1000, 2)
        response.headers["X-Response-Time"] = f"{elapsed_ms}ms"
        return response

    app.include_router(api_router)
    return app
