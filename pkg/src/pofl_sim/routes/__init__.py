"""API route handlers."""

from fastapi import APIRouter

from pofl_sim.routes.chain import router as chain_router
from pofl_sim.routes.health import router as health_router
from pofl_sim.routes.reports import router as reports_router

api_router = APIRouter()
api_router.include_router(health_router)
api_router.include_router(chain_router)
api_router.include_router(reports_router)

__all__ = ["api_router"]
