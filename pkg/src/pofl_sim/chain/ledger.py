"""Append-only record of data trades and leak reports, and the reputations it implies.

A pool's reputation is never stored on its own: it is the result of replaying
the ledger from the pool's registered starting value, lowering it by a fixed
penalty for every leak on record.
"""

from collections.abc import Mapping, Sequence
from typing import Literal

import structlog
from pydantic import BaseModel, ConfigDict, Field

from pofl_sim.errors import ParameterError, UnknownPoolError
from pofl_sim.serialization import canonical_json

logger = structlog.stdlib.get_logger()

LEAK_PENALTY = 0.1


class TradeLedgerEntry(BaseModel):
    """One executed trade; `leak_evidence` marks a detected leak of its data."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["trade"] = "trade"
    pool_id: str
    provider_id: str
    final_price: float
    trade_time: int = Field(ge=0)
    leak_evidence: bool = False

    def to_transaction(self) -> bytes:
        return canonical_json(self.model_dump(mode="json"))


class LeakReport(BaseModel):
    """Leak evidence raised against a pool outside any trade entry."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["leak"] = "leak"
    pool_id: str
    report_time: int = Field(ge=0)

    def to_transaction(self) -> bytes:
        return canonical_json(self.model_dump(mode="json"))


LedgerRecord = TradeLedgerEntry | LeakReport


def penalize(r: float) -> float:
    """One leak incident: r <- max(0, r - 0.1)."""
    return max(0.0, r - LEAK_PENALTY)


def _is_leak(record: LedgerRecord) -> bool:
    return isinstance(record, LeakReport) or record.leak_evidence


class TradeLedger:
    """Single-writer trade ledger with replayable reputations."""

    def __init__(self, reputations: Mapping[str, float] | None = None) -> None:
        self._initial: dict[str, float] = {}
        self._current: dict[str, float] = {}
        self._records: list[LedgerRecord] = []
        for pool_id, r in (reputations or {}).items():
            self.register_pool(pool_id, r)

    @property
    def records(self) -> tuple[LedgerRecord, ...]:
        return tuple(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def register_pool(self, pool_id: str, reputation: float) -> None:
        if not 0.0 <= reputation <= 1.0:
            raise ParameterError(f"Reputation must lie in [0, 1], got {reputation}")
        self._initial[pool_id] = reputation
        self._current[pool_id] = reputation

    def reputation(self, pool_id: str) -> float:
        try:
            return self._current[pool_id]
        except KeyError:
            raise UnknownPoolError(pool_id) from None

    def record_trade(self, entry: TradeLedgerEntry) -> None:
        """Append a trade; a flagged leak lowers the pool's reputation.

        Raises:
            UnknownPoolError: If the pool was never registered.
        """
        before = self.reputation(entry.pool_id)
        self._records.append(entry)
        if entry.leak_evidence:
            self._current[entry.pool_id] = penalize(before)
        logger.info(
            "trade_recorded",
            pool_id=entry.pool_id,
            provider_id=entry.provider_id,
            leak=entry.leak_evidence,
        )

    def update_reputation(
        self, pool_id: str, leak_evidence: bool, report_time: int = 0
    ) -> float:
        """Apply leak evidence (if any) and return the pool's reputation.

        Raises:
            UnknownPoolError: If the pool was never registered.
        """
        r = self.reputation(pool_id)
        if not leak_evidence:
            return r
        self._records.append(LeakReport(pool_id=pool_id, report_time=report_time))
        self._current[pool_id] = penalize(r)
        logger.info(
            "reputation_lowered", pool_id=pool_id, reputation=self._current[pool_id]
        )
        return self._current[pool_id]

    def replay_reputation(self, pool_id: str, upto: int | None = None) -> float:
        """Reputation derived from the first `upto` records (all by default)."""
        if pool_id not in self._initial:
            raise UnknownPoolError(pool_id)
        return replay_reputation(
            self._records[:upto], pool_id, self._initial[pool_id]
        )

    def transactions(self, start: int = 0) -> list[bytes]:
        """Canonical bytes of the records from `start` on, for a block body."""
        return [record.to_transaction() for record in self._records[start:]]


def replay_reputation(
    records: Sequence[LedgerRecord], pool_id: str, initial: float
) -> float:
    r = initial
    for record in records:
        if record.pool_id == pool_id and _is_leak(record):
            r = penalize(r)
    return r
