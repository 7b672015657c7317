"""One-parameter sweeps over the trading game, training and protocol cost."""

import csv
import io
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field

from pofl_sim.config import Settings, get_settings
from pofl_sim.errors import DivergenceError, UsageError
from pofl_sim.federated.datasets import (
    classification_task,
    linear_regression_task,
    partition_dataset,
)
from pofl_sim.federated.mining import TrainingConfig, epochs_to_threshold, train_pool
from pofl_sim.federated.model import ModelParams
from pofl_sim.simulation.costs import CostModel, linear_fit
from pofl_sim.simulation.scenario import ScenarioConfig
from pofl_sim.trading.game import solve_equilibrium
from pofl_sim.verification.circuit import (
    Normalization,
    build_comparison_circuit,
    ceil_log2,
    count_nonfree_gates,
)
from pofl_sim.verification.he import keygen
from pofl_sim.verification.ot import get_group

logger = structlog.stdlib.get_logger()

TRADING_AXES = ("r", "Q", "alpha_t", "beta_t")
AXES = (*TRADING_AXES, "zeta", "S", "I")

Cell = float | int | None


class LearningSweep(BaseModel):
    """Fixed workload of the learning-rate and data-share sweeps."""

    model_config = ConfigDict(frozen=True)

    records: int = Field(default=200, ge=1)
    dimension: int = Field(default=4, ge=1)
    noise: float = Field(default=0.1, ge=0.0)
    loss_threshold: float = Field(default=0.05, gt=0.0)
    accuracy_threshold: float = Field(default=0.9, gt=0.0, le=1.0)
    max_epochs: int = Field(default=500, ge=1)
    seed: int = Field(default=0, ge=0)


@dataclass(frozen=True)
class SweepTable:
    """Rows of metrics, one per swept value; the first column is the value."""

    axis: str
    columns: tuple[str, ...]
    rows: tuple[tuple[Cell, ...], ...]

    def column(self, name: str) -> list[Cell]:
        j = self.columns.index(name)
        return [row[j] for row in self.rows]

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(self.columns)
        writer.writerows(
            ["" if cell is None else cell for cell in row] for row in self.rows
        )
        return out.getvalue()


def _trading_sweep(
    config: ScenarioConfig, axis: str, values: Sequence[float]
) -> SweepTable:
    pool = config.pools[0]
    provider = config.provider_for(pool)
    rows: list[tuple[Cell, ...]] = []
    for value in values:
        r = value if axis == "r" else pool.reputation
        economics = pool.economics
        match axis:
            case "Q":
                economics = economics.model_copy(update={"q": value})
            case "alpha_t":
                economics = economics.model_copy(update={"alpha_t": value})
            case "beta_t":
                economics = economics.model_copy(update={"beta_t": value})
        eq = solve_equilibrium(r, config.market, provider.economics, economics)
        rows.append(
            (
                value,
                eq.m_star,
                eq.ds_star,
                eq.p,
                eq.pool_utility,
                eq.provider_utility,
            )
        )
    return SweepTable(
        axis=axis,
        columns=(axis, "m_star", "ds_star", "p", "pool_utility", "provider_utility"),
        rows=tuple(rows),
    )


def _zeta_sweep(
    config: ScenarioConfig, values: Sequence[float], learning: LearningSweep
) -> SweepTable:
    data = linear_regression_task(
        learning.records, learning.dimension, learning.noise, learning.seed
    )
    miners = config.pools[0].miners
    shards = partition_dataset(data, miners, learning.seed)
    model0 = ModelParams.zeros([learning.dimension, 1])
    rows: list[tuple[Cell, ...]] = []
    for zeta in values:
        cfg = TrainingConfig(zeta=zeta, max_epochs=learning.max_epochs)
        try:
            result = train_pool(model0, shards, cfg, pool_id=f"zeta={zeta}")
        except DivergenceError as exc:
            rows.append((zeta, None, 1, exc.epoch, None))
            continue
        epochs = epochs_to_threshold(result.metrics, loss=learning.loss_threshold)
        rows.append((zeta, epochs, 0, None, result.metrics[-1].loss))
    return SweepTable(
        axis="zeta",
        columns=(
            "zeta",
            "epochs_to_threshold",
            "diverged",
            "diverged_at",
            "final_loss",
        ),
        rows=tuple(rows),
    )


def _share_sweep(
    config: ScenarioConfig, values: Sequence[float], learning: LearningSweep
) -> SweepTable:
    """Per-miner share S of a fixed pool dataset; the pool has 1/S miners."""
    req = config.requester
    data = classification_task(
        learning.records, req.dimension, req.classes, learning.seed, spread=req.spread
    )
    model0 = ModelParams.random(
        config.widths(), np.random.default_rng(learning.seed)
    )
    cfg = config.training.model_copy(
        update={"max_epochs": learning.max_epochs, "deadline": None}
    )
    rows: list[tuple[Cell, ...]] = []
    for share in values:
        if not 0.0 < share <= 1.0:
            raise UsageError(f"data share must lie in (0, 1], got {share}")
        miners = max(1, round(1.0 / share))
        shards = partition_dataset(data, miners, learning.seed)
        result = train_pool(
            model0, shards, cfg, pool_id=f"S={share}", eval_set=data
        )
        epochs = epochs_to_threshold(
            result.metrics, accuracy=learning.accuracy_threshold
        )
        final = result.metrics[-1].accuracy
        rows.append((share, miners, epochs, final))
    return SweepTable(
        axis="S",
        columns=("S", "miners", "epochs_to_accuracy", "final_accuracy"),
        rows=tuple(rows),
    )


def _size_sweep(
    config: ScenarioConfig, values: Sequence[float], settings: Settings
) -> SweepTable:
    req = config.requester
    keypair = keygen(config.crypto.key_bits(settings), seed=config.seed)
    group = get_group(config.crypto.group(settings))
    model = CostModel.for_key(
        keypair.public_key,
        group,
        feature_width=req.dimension,
        hidden_width=req.hidden,
        label_bits=req.label_bits,
    )
    rows: list[tuple[Cell, ...]] = []
    for value in values:
        records = int(value)
        if records < 1:
            raise UsageError(f"test-set size must be positive, got {value}")
        circuit = build_comparison_circuit(records, req.label_bits)
        raw = count_nonfree_gates(circuit, Normalization.RAW)
        table = count_nonfree_gates(circuit, Normalization.TABLE)
        cost = model.row(records)
        rows.append(
            (
                records,
                raw.total,
                table.total,
                records + records * ceil_log2(records) / 2,
                cost.he_bytes,
                cost.ot_bytes,
                cost.gc_bytes,
            )
        )
    if len(rows) > 1:
        fit = linear_fit(
            [int(value) for value in values], [row[4] or 0 for row in rows]
        )
        logger.info(
            "he_bytes_fit",
            slope=fit.slope,
            intercept=fit.intercept,
            r_squared=fit.r_squared,
        )
    return SweepTable(
        axis="I",
        columns=(
            "I",
            "raw_nonfree",
            "table_nonfree",
            "table_formula",
            "he_bytes",
            "ot_bytes",
            "gc_bytes",
        ),
        rows=tuple(rows),
    )


def run_sweep(
    config: ScenarioConfig,
    axis: str,
    values: Sequence[float],
    *,
    learning: LearningSweep | None = None,
    settings: Settings | None = None,
) -> SweepTable:
    """Vary one parameter of the scenario and tabulate the resulting metrics.

    Trading axes use the first pool, its provider and the market of the
    scenario; `zeta` and `S` train on a fixed synthetic workload; `I`
    tabulates gate counts and the protocol's byte model.

    Raises:
        UsageError: If the axis is unknown or no values are given.
    """
    if axis not in AXES:
        choices = ", ".join(AXES)
        raise UsageError(f"unknown sweep axis '{axis}'; choose from {choices}")
    if not values:
        raise UsageError("a sweep needs at least one value")
    learning = learning or LearningSweep()
    logger.info("sweep_started", axis=axis, points=len(values))
    if axis in TRADING_AXES:
        table = _trading_sweep(config, axis, values)
    elif axis == "zeta":
        table = _zeta_sweep(config, values, learning)
    elif axis == "S":
        table = _share_sweep(config, values, learning)
    else:
        table = _size_sweep(config, values, settings or get_settings())
    logger.info("sweep_complete", axis=axis, rows=len(table.rows))
    return table
