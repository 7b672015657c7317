"""Files written by a simulation run: chain dump, round reports and metrics CSVs."""

import csv
import io
from collections.abc import Iterable, Sequence
from pathlib import Path

import structlog

from pofl_sim.simulation.costs import CostRow
from pofl_sim.simulation.orchestrator import RoundReport, SimulationState

logger = structlog.stdlib.get_logger()

ROUND_COLUMNS = (
    "round",
    "task_id",
    "pool_id",
    "executed",
    "p",
    "final_price",
    "leaked",
    "epochs",
    "final_loss",
    "measured",
    "claimed",
    "plaintext",
    "verified",
    "reputation_before",
    "reputation_after",
    "winner",
)
COST_COLUMNS = ("round", *CostRow.model_fields)


def _csv(columns: Sequence[str], rows: Iterable[Sequence[object]]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(["" if cell is None else cell for cell in row] for row in rows)
    return out.getvalue()


def round_rows(report: RoundReport) -> list[tuple[object, ...]]:
    """One row per pool that took part in the trade stage."""
    pools = {p.pool_id: p for p in report.pools}
    rows: list[tuple[object, ...]] = []
    for trade in report.trades:
        pool = pools.get(trade.pool_id)
        rows.append(
            (
                report.round,
                report.task_id,
                trade.pool_id,
                int(trade.executed),
                trade.p,
                trade.final_price,
                int(trade.leaked),
                None if pool is None else pool.epochs,
                None if pool is None or not pool.losses else pool.losses[-1],
                None if pool is None else pool.measured,
                None if pool is None else pool.claimed,
                None if pool is None else pool.plaintext,
                None if pool is None else pool.verified,
                report.reputation_before[trade.pool_id],
                report.reputation_after[trade.pool_id],
                int(report.winner == trade.pool_id),
            )
        )
    return rows


def rounds_csv(reports: Sequence[RoundReport]) -> str:
    return _csv(ROUND_COLUMNS, (row for r in reports for row in round_rows(r)))


def costs_csv(reports: Sequence[RoundReport]) -> str:
    return _csv(
        COST_COLUMNS,
        (
            (report.round, *cost.model_dump().values())
            for report in reports
            for cost in report.costs
        ),
    )


def write_run(state: SimulationState, out_dir: Path) -> list[Path]:
    """Write every artifact of a run under `out_dir` and return the paths."""
    reports_dir = out_dir / "reports"
    reports_dir.mkdir(parents=True, exist_ok=True)
    written = [out_dir / "chain.bin", out_dir / "rounds.csv", out_dir / "costs.csv"]
    state.chain.dump(written[0])
    written[1].write_text(rounds_csv(state.reports), encoding="utf-8")
    written[2].write_text(costs_csv(state.reports), encoding="utf-8")
    for report in state.reports:
        path = reports_dir / f"round-{report.round:04d}.json"
        path.write_bytes(report.to_json())
        written.append(path)
    logger.info("run_written", out_dir=str(out_dir), files=len(written))
    return written
