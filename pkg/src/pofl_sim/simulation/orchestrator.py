"""Deterministic PoFL rounds.

One round: select a task, let every pool negotiate for training data, train
inside each pool that bought data, measure each model's accuracy privately
with the requester, build one candidate block per pool, elect the winner on
every full node and pay the winning pool's miners. All randomness is derived
from the scenario seed, the round index and the actor, so the same scenario
always produces the same chain bytes and reports.
"""

import math
import random
import zlib
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import dataclass
from enum import StrEnum

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict

from pofl_sim.chain.block import Block, Task, Vm, build_block
from pofl_sim.chain.election import (
    ElectionOutcome,
    VerifyFn,
    run_election,
    select_task,
)
from pofl_sim.chain.ledger import TradeLedger, TradeLedgerEntry
from pofl_sim.chain.state import ChainState
from pofl_sim.config import OTGroupName, Settings, get_settings
from pofl_sim.errors import ChainError, PoflError, ProtocolError, StageError
from pofl_sim.federated.datasets import (
    Dataset,
    classification_task,
    partition_dataset,
)
from pofl_sim.federated.mining import TrainingResult, train_pool
from pofl_sim.federated.model import ModelParams
from pofl_sim.logging import round_context
from pofl_sim.serialization import canonical_json
from pofl_sim.simulation.costs import CostRow, cost_row
from pofl_sim.simulation.scenario import PoolConfig, ScenarioConfig
from pofl_sim.trading.game import Rejected, negotiate_trade
from pofl_sim.verification.circuit import build_comparison_circuit
from pofl_sim.verification.garbled import evaluator_label_pairs
from pofl_sim.verification.he import FixedPointEncoding, HEKeyPair, keygen
from pofl_sim.verification.ot import DiscreteLogOT, get_group
from pofl_sim.verification.protocol import (
    AccuracyResult,
    Requester,
    run_accuracy_protocol,
    verify_accuracy,
)

logger = structlog.stdlib.get_logger()


class Stage(StrEnum):
    """Round stages, in execution order."""

    SELECT_TASK = "select_task"
    DATA = "data"
    TRADE = "trade"
    TRAINING = "training"
    VERIFICATION = "verification"
    BLOCK = "block"
    ELECTION = "election"
    REWARD = "reward"


_STAGE_INDEX = {stage: i for i, stage in enumerate(Stage)}


def derive_seed(seed: int, round_index: int, stage: Stage, *path: str) -> int:
    """A 64-bit seed unique to (scenario seed, round, stage, actor path)."""
    entropy = [seed, round_index, _STAGE_INDEX[stage]]
    entropy.extend(zlib.crc32(part.encode()) for part in path)
    state = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 32 | int(state[1])


@contextmanager
def _stage(stage: Stage) -> Iterator[None]:
    try:
        yield
    except (PoflError, ValueError) as exc:
        logger.error("round_aborted", stage=stage.value, error=str(exc))
        raise StageError(stage.value, exc) from exc


class TradeOutcome(BaseModel):
    model_config = ConfigDict(frozen=True)

    pool_id: str
    provider_id: str
    reputation: float
    executed: bool
    rejected: str | None = None
    m_star: float | None = None
    ds_star: float | None = None
    p: float | None = None
    final_price: float | None = None
    leaked: bool = False


class PoolOutcome(BaseModel):
    """Training and accuracy of one pool that bought data."""

    model_config = ConfigDict(frozen=True)

    pool_id: str
    epochs: int
    losses: tuple[float, ...]
    measured: int
    claimed: int
    plaintext: int
    verified: int | None = None


class RoundReport(BaseModel):
    """Everything one round produced; serialized with sorted keys."""

    model_config = ConfigDict(frozen=True)

    round: int
    task_id: str
    record_count: int
    test_commitment: str
    trades: tuple[TradeOutcome, ...]
    pools: tuple[PoolOutcome, ...]
    winner: str | None
    height: int
    reputation_before: dict[str, float]
    reputation_after: dict[str, float]
    balances: dict[str, float]
    costs: tuple[CostRow, ...]

    def to_json(self) -> bytes:
        return canonical_json(self.model_dump(mode="json"), indent=True)


def miner_ids(pool: PoolConfig) -> list[str]:
    return [f"{pool.pool_id}/miner-{i}" for i in range(pool.miners)]


class SimulationState:
    """Chain, ledger, balances and pending tasks carried across rounds."""

    def __init__(self, config: ScenarioConfig) -> None:
        self.chain = ChainState()
        self.ledger = TradeLedger({p.pool_id: p.reputation for p in config.pools})
        self.balances: dict[str, float] = {
            miner: 0.0 for pool in config.pools for miner in miner_ids(pool)
        }
        self.pending: list[Task] = list(config.tasks)
        self.rounds = 0
        self.tick = 0
        self.committed_records = 0
        self.reports: list[RoundReport] = []


@dataclass
class _PoolRun:
    """Pool-private material kept for the election."""

    config: PoolConfig
    training: TrainingResult
    accuracy: AccuracyResult
    claimed: int
    plaintext: int
    block: Block | None = None


@dataclass(frozen=True)
class _Crypto:
    key_bits: int
    ot_group: OTGroupName


def _crypto(config: ScenarioConfig, settings: Settings) -> _Crypto:
    return _Crypto(
        key_bits=config.crypto.key_bits(settings),
        ot_group=config.crypto.group(settings),
    )


def task_data(
    config: ScenarioConfig, task: Task
) -> tuple[Dataset, dict[str, Dataset]]:
    """The requester's test set and each provider's records for one task."""
    req = config.requester
    sizes = [p.records for p in config.providers]
    full = classification_task(
        size=req.test_records + sum(sizes),
        dimension=req.dimension,
        classes=req.classes,
        seed=config.seed ^ zlib.crc32(task.task_id.encode()),
        spread=req.spread,
    )
    test = full.subset(np.arange(req.test_records))
    offers: dict[str, Dataset] = {}
    start = req.test_records
    for provider, size in zip(config.providers, sizes, strict=True):
        offers[provider.provider_id] = full.subset(np.arange(start, start + size))
        start += size
    return test, offers


def _next_task(state: SimulationState) -> Task:
    arrived = [t for t in state.pending if t.arrival <= state.tick]
    if not arrived and state.pending:
        state.tick = min(t.arrival for t in state.pending)
        arrived = [t for t in state.pending if t.arrival <= state.tick]
    return select_task(arrived)


def _trade(
    config: ScenarioConfig, state: SimulationState, round_index: int
) -> list[TradeOutcome]:
    outcomes: list[TradeOutcome] = []
    for pool in sorted(config.pools, key=lambda p: p.pool_id):
        provider = config.provider_for(pool)
        r = state.ledger.reputation(pool.pool_id)
        rng = random.Random(
            derive_seed(config.seed, round_index, Stage.TRADE, pool.pool_id)
        )
        quote = negotiate_trade(
            pool.economics, provider.economics, r, config.market, rng=rng
        )
        if isinstance(quote, Rejected):
            outcomes.append(
                TradeOutcome(
                    pool_id=pool.pool_id,
                    provider_id=provider.provider_id,
                    reputation=r,
                    executed=False,
                    rejected=quote.reason,
                )
            )
            continue
        leaked = quote.executed and rng.random() < pool.leak_probability
        if quote.executed:
            state.ledger.record_trade(
                TradeLedgerEntry(
                    pool_id=pool.pool_id,
                    provider_id=provider.provider_id,
                    final_price=quote.final_price,
                    trade_time=state.tick,
                    leak_evidence=leaked,
                )
            )
        outcomes.append(
            TradeOutcome(
                pool_id=pool.pool_id,
                provider_id=provider.provider_id,
                reputation=r,
                executed=quote.executed,
                m_star=quote.m_star,
                ds_star=quote.ds_star,
                p=quote.p,
                final_price=quote.final_price,
                leaked=leaked,
            )
        )
    return outcomes


def _train(
    config: ScenarioConfig,
    pool: PoolConfig,
    data: Dataset,
    task: Task,
    round_index: int,
    crypto: _Crypto,
) -> TrainingResult:
    seed = derive_seed(config.seed, round_index, Stage.TRAINING, pool.pool_id)
    shards = partition_dataset(data, pool.miners, seed, owners=miner_ids(pool))
    model0 = ModelParams.random(config.widths(), np.random.default_rng(seed))
    keypair: HEKeyPair | None = None
    if config.crypto.encrypt_updates:
        keypair = keygen(crypto.key_bits, seed=seed)
    cfg = config.training.model_copy(update={"deadline": task.deadline})
    return train_pool(
        model0,
        shards,
        cfg,
        keypair=keypair,
        rng=random.Random(seed),
        pool_id=pool.pool_id,
        epochs_per_tick=pool.epochs_per_tick,
    )


def _verify_with_requester(
    runs: dict[str, _PoolRun],
    requester: Requester,
    ot: DiscreteLogOT,
) -> VerifyFn:
    """Full-node verification: replay the comparison with the requester.

    The pool that garbled the circuit acts as OT sender with its retained
    garbling seed; the transcript commitment in V_m must match the stored
    transcript.
    """
    circuit = build_comparison_circuit(requester.record_count, requester.label_bits)

    def verify(block: Block) -> int:
        run = runs.get(block.header.pool_id)
        if run is None:
            raise ChainError(f"no pool behind candidate {block.header.pool_id}")
        block.vm.check(requester.record_count, run.accuracy.transcript)
        pairs = evaluator_label_pairs(circuit, run.accuracy.garbling_seed)
        return verify_accuracy(block.vm.garbled_circuit, requester, pairs, ot)

    return verify


def _elect(
    config: ScenarioConfig,
    candidates: list[Block],
    verify: VerifyFn,
) -> ElectionOutcome:
    """Run the election on every full node; they must agree."""
    outcomes = [run_election(candidates, verify) for _ in range(config.full_nodes)]
    winners = {None if o.winner is None else o.winner.digest() for o in outcomes}
    if len(winners) != 1:
        raise ChainError("full nodes disagree on the winner")
    return outcomes[0]


def run_round(
    config: ScenarioConfig,
    state: SimulationState,
    settings: Settings | None = None,
) -> RoundReport:
    """Execute one full PoFL round and append the winning block, if any.

    Every log event of the round carries its index and the scenario seed.

    Raises:
        StageError: If any stage fails; names the stage and wraps the cause.
    """
    with round_context(state.rounds, config.seed):
        return _play_round(config, state, settings or get_settings())


def _play_round(
    config: ScenarioConfig, state: SimulationState, settings: Settings
) -> RoundReport:
    crypto = _crypto(config, settings)
    round_index = state.rounds
    reputation_before = {
        p.pool_id: state.ledger.reputation(p.pool_id) for p in config.pools
    }

    with _stage(Stage.SELECT_TASK):
        task = _next_task(state)
    log = logger.bind(task_id=task.task_id)
    log.info("round_started", tick=state.tick)

    with _stage(Stage.DATA):
        test_set, offers = task_data(config, task)
        req = config.requester
        requester = Requester(
            req.requester_id,
            test_set,
            keygen(
                crypto.key_bits,
                seed=derive_seed(config.seed, round_index, Stage.DATA, "requester"),
            ),
            label_bits=req.label_bits,
            encoding=FixedPointEncoding(settings.fixed_point_bits),
            seed=derive_seed(config.seed, round_index, Stage.DATA, "session"),
        )
        commitment = requester.commitment().hex()
        if task.test_commitment and task.test_commitment != commitment:
            raise ProtocolError(
                f"test set of {task.task_id} does not match its published commitment"
            )

    with _stage(Stage.TRADE):
        trades = _trade(config, state, round_index)

    runs: dict[str, _PoolRun] = {}
    for trade in trades:
        if not trade.executed:
            continue
        pool = config.pool(trade.pool_id)
        with _stage(Stage.TRAINING):
            training = _train(
                config, pool, offers[trade.provider_id], task, round_index, crypto
            )
        with _stage(Stage.VERIFICATION):
            seed = derive_seed(
                config.seed, round_index, Stage.VERIFICATION, pool.pool_id
            )
            accuracy = run_accuracy_protocol(
                training.model,
                requester,
                session_id=f"{task.task_id}/{pool.pool_id}",
                garbling_seed=seed,
                ot=DiscreteLogOT(get_group(crypto.ot_group), seed),
                rng=random.Random(seed),
            )
            predicted = training.model.predict_labels(test_set.features)
            runs[pool.pool_id] = _PoolRun(
                config=pool,
                training=training,
                accuracy=accuracy,
                claimed=min(
                    accuracy.record_count, accuracy.matches + pool.inflate_claim
                ),
                plaintext=requester.plaintext_accuracy([int(p) for p in predicted]),
            )

    with _stage(Stage.BLOCK):
        transactions = state.ledger.transactions(state.committed_records)
        for run in runs.values():
            epochs = len(run.training.metrics)
            run.block = build_block(
                state.chain.tip,
                transactions,
                task.task_id,
                Vm(
                    encrypted_weights=run.accuracy.encrypted_weights,
                    garbled_circuit=run.accuracy.garbled.to_bytes(),
                    transcript_commitment=run.accuracy.transcript.commitment(),
                ),
                pool_id=run.config.pool_id,
                matches=run.claimed,
                record_count=run.accuracy.record_count,
                timestamp=task.arrival
                + math.ceil(epochs / run.config.epochs_per_tick),
            )

    with _stage(Stage.ELECTION):
        candidates = [run.block for run in runs.values() if run.block is not None]
        ot = DiscreteLogOT(
            get_group(crypto.ot_group),
            derive_seed(config.seed, round_index, Stage.ELECTION),
        )
        election = _elect(
            config, candidates, _verify_with_requester(runs, requester, ot)
        )
        verified = {
            block.header.pool_id: election.verified.get(block.digest())
            for block in candidates
        }

    winner = election.winner
    with _stage(Stage.REWARD):
        if winner is not None:
            state.chain.append(winner)
            state.committed_records = len(state.ledger)
            pool = config.pool(winner.header.pool_id)
            share = task.reward / pool.miners
            for miner in miner_ids(pool):
                state.balances[miner] += share

    state.pending = [t for t in state.pending if t.task_id != task.task_id]
    state.tick = max(
        [state.tick + 1]
        + [r.block.header.timestamp for r in runs.values() if r.block is not None]
    )
    state.rounds += 1

    report = RoundReport(
        round=round_index,
        task_id=task.task_id,
        record_count=requester.record_count,
        test_commitment=commitment,
        trades=tuple(trades),
        pools=tuple(
            PoolOutcome(
                pool_id=pool_id,
                epochs=len(run.training.metrics),
                losses=tuple(m.loss for m in run.training.metrics),
                measured=run.accuracy.matches,
                claimed=run.claimed,
                plaintext=run.plaintext,
                verified=verified.get(pool_id),
            )
            for pool_id, run in runs.items()
        ),
        winner=None if winner is None else winner.header.pool_id,
        height=state.chain.height,
        reputation_before=reputation_before,
        reputation_after={
            p.pool_id: state.ledger.reputation(p.pool_id) for p in config.pools
        },
        balances=dict(sorted(state.balances.items())),
        costs=tuple(
            cost_row(
                pool_id,
                run.accuracy,
                update_bytes=run.training.update_bytes,
            )
            for pool_id, run in runs.items()
        ),
    )
    state.reports.append(report)
    log.info(
        "round_complete",
        winner=report.winner,
        candidates=len(candidates),
        height=report.height,
    )
    return report


def run_scenario(
    config: ScenarioConfig, settings: Settings | None = None
) -> SimulationState:
    """Run one round per task, in selection order."""
    state = SimulationState(config)
    while state.pending:
        run_round(config, state, settings)
    return state
