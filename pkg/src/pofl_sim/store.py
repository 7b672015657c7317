"""Copy-on-write store of round reports and the chain they produced.

Reads never acquire a lock. Writers build a new snapshot and atomically
swap the reference.
"""

import asyncio
from dataclasses import dataclass, field
from datetime import UTC, datetime
from pathlib import Path

import aiosqlite
import structlog

from pofl_sim.chain.block import Block
from pofl_sim.chain.state import ChainState
from pofl_sim.errors import ChainError
from pofl_sim.simulation.orchestrator import RoundReport

logger = structlog.stdlib.get_logger()


@dataclass(frozen=True)
class ReportSnapshot:
    """Immutable view of one simulation run."""

    reports: dict[int, RoundReport] = field(default_factory=dict)
    reports_list: list[RoundReport] = field(default_factory=list)
    blocks: tuple[Block, ...] = ()
    last_updated: datetime = field(default_factory=lambda: datetime.now(tz=UTC))

    @property
    def height(self) -> int:
        return len(self.blocks) - 1


_EMPTY_SNAPSHOT = ReportSnapshot()


class ReportStore:
    """Lock-free-read report store with optional SQLite persistence."""

    def __init__(self, db_path: Path | None = None) -> None:
        self._snapshot: ReportSnapshot = _EMPTY_SNAPSHOT
        self._write_lock = asyncio.Lock()
        self._db_path = db_path

    def get_snapshot(self) -> ReportSnapshot:
        """Return the current snapshot. No lock needed."""
        return self._snapshot

    def get_report(self, round_index: int) -> RoundReport | None:
        return self._snapshot.reports.get(round_index)

    def get_block(self, height: int) -> Block | None:
        blocks = self._snapshot.blocks
        return blocks[height] if 0 <= height < len(blocks) else None

    async def replace_all(
        self, reports: list[RoundReport], chain: ChainState
    ) -> None:
        """Replace the stored run atomically under the write lock."""
        async with self._write_lock:
            snapshot = self._build_snapshot(reports, chain.blocks)
            self._snapshot = snapshot
            await self._persist(snapshot, chain.dumps())

    @staticmethod
    def _build_snapshot(
        reports: list[RoundReport], blocks: tuple[Block, ...]
    ) -> ReportSnapshot:
        ordered = sorted(reports, key=lambda r: r.round)
        return ReportSnapshot(
            reports={r.round: r for r in ordered},
            reports_list=ordered,
            blocks=blocks,
            last_updated=datetime.now(tz=UTC),
        )

    async def init_db(self) -> None:
        """Create the SQLite tables if persistence is enabled."""
        if self._db_path is None:
            return
        try:
            async with aiosqlite.connect(self._db_path) as db:
                await db.execute(
                    """
                    CREATE TABLE IF NOT EXISTS reports (
                        round INTEGER PRIMARY KEY,
                        data TEXT NOT NULL,
                        updated_at TEXT NOT NULL
                    )
                    """
                )
                await db.execute(
                    """
                    CREATE TABLE IF NOT EXISTS chain (
                        id INTEGER PRIMARY KEY CHECK (id = 1),
                        data BLOB NOT NULL
                    )
                    """
                )
                await db.commit()
        except aiosqlite.Error:
            await logger.awarning(
                "report_db_init_failed",
                db_path=str(self._db_path),
                exc_info=True,
            )
            self._db_path = None

    async def load_from_db(self) -> bool:
        """Load the stored run from SQLite. Returns True if reports were loaded."""
        if self._db_path is None or not self._db_path.exists():
            return False
        try:
            async with aiosqlite.connect(self._db_path) as db:
                cursor = await db.execute("SELECT data FROM reports ORDER BY round")
                rows = await cursor.fetchall()
                cursor = await db.execute("SELECT data FROM chain WHERE id = 1")
                chain_row = await cursor.fetchone()
            if not rows:
                return False
            reports = [RoundReport.model_validate_json(data) for (data,) in rows]
            chain = ChainState.loads(bytes(chain_row[0])) if chain_row else ChainState()
        except (aiosqlite.Error, ValueError, ChainError):
            await logger.awarning(
                "report_db_load_failed",
                db_path=str(self._db_path),
                exc_info=True,
            )
            return False
        self._snapshot = self._build_snapshot(reports, chain.blocks)
        await logger.ainfo(
            "reports_loaded_from_db",
            count=len(reports),
            height=chain.height,
            db_path=str(self._db_path),
        )
        return True

    async def _persist(self, snapshot: ReportSnapshot, chain_bytes: bytes) -> None:
        if self._db_path is None:
            return
        try:
            async with aiosqlite.connect(self._db_path) as db:
                await db.execute("DELETE FROM reports")
                now = datetime.now(tz=UTC).isoformat()
                await db.executemany(
                    "INSERT INTO reports (round, data, updated_at) VALUES (?, ?, ?)",
                    [
                        (report.round, report.model_dump_json(), now)
                        for report in snapshot.reports_list
                    ],
                )
                await db.execute(
                    "INSERT OR REPLACE INTO chain (id, data) VALUES (1, ?)",
                    (chain_bytes,),
                )
                await db.commit()
        except aiosqlite.Error:
            await logger.awarning(
                "report_db_persist_failed",
                db_path=str(self._db_path),
                exc_info=True,
            )
