"""Health check endpoint."""

import time

from fastapi import APIRouter, Request

from pofl_sim import __version__
from pofl_sim.chain.state import validate_chain
from pofl_sim.dependencies import StoreDep
from pofl_sim.models import HealthResponse

router = APIRouter()


@router.get("/health", response_model=HealthResponse)
async def health(request: Request, store: StoreDep) -> HealthResponse:
    """Return service health and the size of the stored run."""
    snapshot = store.get_snapshot()
    start_time: float = request.app.state.start_time
    return HealthResponse(
        status="healthy",
        reports_loaded=len(snapshot.reports),
        chain_height=snapshot.height,
        chain_valid=validate_chain(snapshot.blocks, check_payloads=False),
        last_updated=snapshot.last_updated if snapshot.reports else None,
        uptime_seconds=round(time.monotonic() - start_time, 1),
        version=__version__,
    )
