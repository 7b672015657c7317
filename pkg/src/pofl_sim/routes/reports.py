"""Round report endpoints."""

from fastapi import APIRouter, HTTPException

from pofl_sim.dependencies import StoreDep
from pofl_sim.models import ReportsListResponse
from pofl_sim.simulation.orchestrator import RoundReport

router = APIRouter()


@router.get("/reports", response_model=ReportsListResponse)
async def list_reports(store: StoreDep) -> ReportsListResponse:
    """List every stored round report."""
    snapshot = store.get_snapshot()
    return ReportsListResponse(
        count=len(snapshot.reports_list),
        last_updated=snapshot.last_updated if snapshot.reports else None,
        reports=snapshot.reports_list,
    )


@router.get("/reports/{round_index}", response_model=RoundReport)
async def get_report(store: StoreDep, round_index: int) -> RoundReport:
    """Get the report of one round."""
    report = store.get_report(round_index)
    if report is None:
        raise HTTPException(
            status_code=404, detail=f"No report for round {round_index}"
        )
    return report
