"""Task selection and full-node winner election."""

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import structlog

from pofl_sim.chain.block import Block, Task
from pofl_sim.errors import ChainError

logger = structlog.stdlib.get_logger()

# Returns the verified match count N of a candidate block.
VerifyFn = Callable[[Block], int]


def select_task(pending: Sequence[Task]) -> Task:
    """Highest reward; ties go to the earliest arrival, then the lowest id.

    Raises:
        ChainError: If nothing is pending.
    """
    if not pending:
        raise ChainError("no pending task to select")
    return min(pending, key=lambda t: (-t.reward, t.arrival, t.task_id))


def rank_candidates(candidates: Sequence[Block]) -> list[Block]:
    """Descending claimed accuracy, then earlier timestamp, then lower hash."""
    return sorted(
        candidates,
        key=lambda b: (-b.header.accuracy, b.header.timestamp, b.digest()),
    )


@dataclass
class ElectionOutcome:
    """The winner (if any) and what every tested candidate verified to."""

    winner: Block | None
    ranking: tuple[Block, ...]
    verified: dict[bytes, int | None] = field(default_factory=dict)

    @property
    def tested(self) -> int:
        return len(self.verified)


def run_election(candidates: Sequence[Block], verify: VerifyFn) -> ElectionOutcome:
    """Verify candidates in rank order until one claim holds.

    A callback that raises counts as a mismatch for that candidate.

    Raises:
        ChainError: If the candidates do not share one task and one parent.
    """
    if candidates:
        first = candidates[0].header
        for block in candidates[1:]:
            h = block.header
            if h.task_id != first.task_id or h.prev_hash != first.prev_hash:
                raise ChainError("candidates must share one task and one parent")
    ranking = tuple(rank_candidates(candidates))
    outcome = ElectionOutcome(winner=None, ranking=ranking)
    for block in ranking:
        key = block.digest()
        try:
            verified: int | None = verify(block)
        except Exception:
            logger.warning(
                "verification_failed",
                pool_id=block.header.pool_id,
                block=key.hex()[:16],
                exc_info=True,
            )
            verified = None
        outcome.verified[key] = verified
        if verified == block.header.matches:
            outcome.winner = block
            logger.info(
                "winner_elected",
                pool_id=block.header.pool_id,
                matches=verified,
                record_count=block.header.record_count,
                tested=outcome.tested,
            )
            return outcome
        logger.info(
            "claim_rejected",
            pool_id=block.header.pool_id,
            claimed=block.header.matches,
            verified=verified,
        )
    logger.info("no_winner", candidates=len(ranking))
    return outcome


def elect_winner(candidates: Sequence[Block], verify: VerifyFn) -> Block | None:
    """First candidate in rank order whose verified N equals its header N."""
    return run_election(candidates, verify).winner
