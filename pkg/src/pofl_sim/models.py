"""Pydantic response schemas of the inspection service."""

from datetime import datetime

from pydantic import BaseModel, ConfigDict

from pofl_sim.simulation.orchestrator import RoundReport


class HealthResponse(BaseModel):
    """Health check response."""

    model_config = ConfigDict(frozen=True)

    status: str
    reports_loaded: int
    chain_height: int
    chain_valid: bool
    last_updated: datetime | None = None
    uptime_seconds: float
    version: str


class BlockView(BaseModel):
    """Header fields of one block; payloads are summarized by size."""

    model_config = ConfigDict(frozen=True)

    hash: str
    height: int
    prev_hash: str
    merkle_root: str
    timestamp: int
    task_id: str
    pool_id: str
    matches: int
    record_count: int
    accuracy: float
    vm_hash: str
    transactions: int
    vm_bytes: dict[str, int]


class ChainResponse(BaseModel):
    """The stored chain, genesis first."""

    model_config = ConfigDict(frozen=True)

    height: int
    valid: bool
    blocks: list[BlockView]


class ReportsListResponse(BaseModel):
    """All stored round reports, in round order."""

    model_config = ConfigDict(frozen=True)

    count: int
    last_updated: datetime | None = None
    reports: list[RoundReport]
