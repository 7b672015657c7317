"""FastAPI dependency injection providers."""

from typing import Annotated

from fastapi import Depends, Request

from pofl_sim.store import ReportStore


def get_store(request: Request) -> ReportStore:
    """Get the report store from app state."""
    store: ReportStore = request.app.state.store
    return store


StoreDep = Annotated[ReportStore, Depends(get_store)]
