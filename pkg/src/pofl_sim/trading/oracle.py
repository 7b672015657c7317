"""Brute-force oracles and the incentive-compatibility audit for the trading game."""

import itertools
from collections.abc import Iterable, Iterator
from dataclasses import dataclass

import numpy as np
import structlog

from pofl_sim.trading.game import (
    FloatArray,
    MarketParams,
    PoolEconomics,
    ProviderEconomics,
    bid_curvature,
    clamped_bid,
    markup_curvature,
    pool_optimal_bid,
    provider_markup_rule,
    provider_utility_rate,
    rule_utility,
)

logger = structlog.stdlib.get_logger()

FakeReport = tuple[float, float, float]


@dataclass(frozen=True)
class GridSpec:
    """Oracle grid: [0, span * ceiling] sampled every `step`."""

    step: float = 1e-4
    span: float = 5.0

    def points(self, ceiling: float) -> FloatArray:
        """Grid points for a price whose recent ceiling is `ceiling`."""
        count = round(self.span * ceiling / self.step)
        return np.linspace(0.0, count * self.step, count + 1)


@dataclass(frozen=True)
class TradingDraw:
    """One random parameter point of the trading game."""

    r: float
    market: MarketParams
    provider: ProviderEconomics
    pool: PoolEconomics


def grid_argmax_markup(
    m: float, r: float, mk: MarketParams, pe: ProviderEconomics, grid: GridSpec
) -> float:
    """Markup on the grid maximizing the provider's utility at bid `m`.

    Ties resolve to the lowest markup.
    """
    ds = grid.points(mk.ds_bar)
    values = provider_utility_rate(m, ds, r, mk, pe, clamp=False)
    return float(ds[int(np.argmax(values))])


def grid_argmax_bid(
    r: float,
    mk: MarketParams,
    pe: ProviderEconomics,
    po: PoolEconomics,
    grid: GridSpec,
) -> float:
    """Bid on the grid maximizing the clamped F_p(m, D_s*(m)).

    Ties resolve to the lowest bid.
    """
    m = grid.points(mk.m_bar)
    values = np.asarray(rule_utility(m, r, mk, pe, po.q, po.alpha_t, po.beta_t))
    return float(m[int(np.argmax(values))])


def fake_report_grid(
    pool: PoolEconomics, steps: int = 21, low: float = 0.5, high: float = 1.5
) -> list[FakeReport]:
    """Multiplicative perturbations of (Q, alpha_t, beta_t) around the truth."""
    factors = np.linspace(low, high, steps)
    return [
        (pool.q * fq, pool.alpha_t * fa, pool.beta_t * fb)
        for fq, fa, fb in itertools.product(factors, repeat=3)
    ]


def ic_audit(
    pool: PoolEconomics,
    provider: ProviderEconomics,
    r: float,
    mk: MarketParams,
    fake_grid: Iterable[FakeReport] | None = None,
    *,
    tolerance: float = 1e-9,
) -> bool:
    """Check that no fake private information earns the pool more than the truth.

    Each fake report yields the bid the pool would compute from it; the bid is
    then scored with the pool's true utility under the provider's rule.
    Reports whose closed form is degenerate are skipped.
    """
    if fake_grid is None:
        fake_grid = fake_report_grid(pool)
    reports = np.asarray(list(fake_grid))
    truth = (pool.q, pool.alpha_t, pool.beta_t)
    m_true = pool_optimal_bid(r, mk, provider, pool)
    best = float(rule_utility(m_true, r, mk, provider, *truth))

    bids, denominators = clamped_bid(
        r, mk, provider, reports[:, 0], reports[:, 1], reports[:, 2]
    )
    bids = np.asarray(bids)
    usable = np.isfinite(bids) & (np.asarray(denominators) != 0.0)
    utilities = np.asarray(rule_utility(bids[usable], r, mk, provider, *truth))
    violations = int(np.count_nonzero(utilities > best + tolerance))
    if violations:
        logger.warning("ic_violation", violations=violations, best=best)
        return False
    return True


def _draw_once(rng: np.random.Generator) -> TradingDraw | None:
    eps2 = rng.uniform(0.1, 0.6)
    eps1 = rng.uniform(0.0, 0.9 - eps2)
    eta = rng.uniform(0.5, 3.0)
    k = rng.uniform(1.2, 3.0)
    k_t = rng.uniform(1.05, 2.5)
    try:
        market = MarketParams(
            eps1=eps1,
            eps2=eps2,
            m_bar=rng.uniform(1.0, 10.0),
            ds_bar=rng.uniform(1.0, 10.0),
        )
        provider = ProviderEconomics(alpha=rng.uniform(0.0, 3.0), beta=k / eta, eta=eta)
        pool = PoolEconomics(
            q=rng.uniform(2.0, 20.0), alpha_t=rng.uniform(0.0, 3.0), beta_t=k_t / eta
        )
    except ValueError:
        return None
    r = float(rng.uniform(0.0, 1.0))
    return TradingDraw(r=r, market=market, provider=provider, pool=pool)


def is_oracle_admissible(
    draw: TradingDraw, grid: GridSpec, min_curvature: float = 1e-3
) -> bool:
    """Whether a draw has a well-curved equilibrium strictly inside the grid."""
    mk, pe, po, r = draw.market, draw.provider, draw.pool, draw.r
    if (
        bid_curvature(mk, pe, po) > -min_curvature
        or markup_curvature(mk, pe) > -min_curvature
    ):
        return False
    bid, denominator = clamped_bid(r, mk, pe, po.q, po.alpha_t, po.beta_t)
    if not np.isfinite(bid) or float(denominator) <= 0.0:
        return False
    if float(rule_utility(bid, r, mk, pe, po.q, po.alpha_t, po.beta_t)) <= 0.0:
        return False
    markup = float(provider_markup_rule(bid, r, mk, pe))
    m_top = grid.span * mk.m_bar - grid.step
    ds_top = grid.span * mk.ds_bar - grid.step
    return bool(grid.step < bid < m_top and grid.step < markup < ds_top)


def random_admissible_draws(
    count: int, seed: int, grid: GridSpec | None = None, max_attempts: int = 1_000_000
) -> Iterator[TradingDraw]:
    """Yield `count` seeded random draws satisfying both equilibrium conditions."""
    grid = grid or GridSpec()
    rng = np.random.default_rng(seed)
    produced = 0
    for _ in range(max_attempts):
        draw = _draw_once(rng)
        if draw is None or not is_oracle_admissible(draw, grid):
            continue
        yield draw
        produced += 1
        if produced == count:
            return
    raise RuntimeError(
        f"only {produced} admissible draws after {max_attempts} attempts"
    )


@dataclass(frozen=True)
class OracleAudit:
    """Closed form against brute force over a batch of random draws."""

    draws: int
    bid_mismatches: int
    markup_mismatches: int
    ic_violations: int

    @property
    def passed(self) -> bool:
        return not (self.bid_mismatches or self.markup_mismatches or self.ic_violations)


def audit_draws(
    count: int, seed: int, grid: GridSpec | None = None, *, fake_steps: int = 21
) -> OracleAudit:
    """Compare m* and D_s*(m*) with the grid argmaxes and run the IC audit.

    A closed-form value agrees when it lies within one grid step of the
    brute-force argmax.
    """
    grid = grid or GridSpec()
    bid_misses = markup_misses = violations = 0
    for draw in random_admissible_draws(count, seed, grid):
        mk, pe, po, r = draw.market, draw.provider, draw.pool, draw.r
        m_star = pool_optimal_bid(r, mk, pe, po)
        ds_star = float(provider_markup_rule(m_star, r, mk, pe))
        if abs(grid_argmax_bid(r, mk, pe, po, grid) - m_star) > grid.step:
            bid_misses += 1
        if abs(grid_argmax_markup(m_star, r, mk, pe, grid) - ds_star) > grid.step:
            markup_misses += 1
        if not ic_audit(po, pe, r, mk, fake_report_grid(po, steps=fake_steps)):
            violations += 1
    audit = OracleAudit(
        draws=count,
        bid_mismatches=bid_misses,
        markup_mismatches=markup_misses,
        ic_violations=violations,
    )
    logger.info(
        "oracle_audit_complete",
        draws=count,
        bid_mismatches=bid_misses,
        markup_mismatches=markup_misses,
        ic_violations=violations,
    )
    return audit
