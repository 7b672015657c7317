"""Reverse-game data trading between a pool and a data provider.

The provider publishes a markup rule D_s*(m); the pool answers with the bid
m* that maximizes its utility under that rule. Every function here is pure;
the only randomness is the Bernoulli draw in `negotiate_trade`, taken from an
explicitly passed RNG. Utilities are per-round (the duration is normalized
to 1), and functions accept scalars or numpy arrays so the brute-force
oracles can evaluate whole grids at once.
"""

import math
import random
from dataclasses import dataclass
from typing import Annotated, Literal

import numpy as np
import numpy.typing as npt
import structlog
from pydantic import BaseModel, ConfigDict, Field, model_validator

from pofl_sim.errors import DegenerateParametersError, EquilibriumError, ParameterError

logger = structlog.stdlib.get_logger()

FloatArray = npt.NDArray[np.float64]
Value = float | FloatArray

Reputation = Annotated[float, Field(ge=0.0, le=1.0)]


class MarketParams(BaseModel):
    """Public weights of the trading-probability rule and recent price ceilings."""

    model_config = ConfigDict(frozen=True)

    eps1: float = Field(ge=0.0, le=1.0)
    eps2: float = Field(gt=0.0, le=1.0)
    m_bar: float = Field(gt=0.0, description="Highest recent pool bid")
    ds_bar: float = Field(gt=0.0, description="Highest recent provider markup")

    @model_validator(mode="after")
    def _check_weights(self) -> "MarketParams":
        if self.eps1 + self.eps2 > 1.0:
            raise ValueError("eps1 + eps2 must not exceed 1")
        return self

    @property
    def eps3(self) -> float:
        """Weight of the bid term."""
        return 1.0 - self.eps1 - self.eps2


class ProviderEconomics(BaseModel):
    """Provider leakage-loss coefficients.

    c(r, V) = alpha * (1 - r) + beta * V with data value V = eta * D_s.
    """

    model_config = ConfigDict(frozen=True)

    alpha: float = Field(ge=0.0)
    beta: float = Field(ge=0.0)
    eta: float = Field(gt=0.0)

    @model_validator(mode="after")
    def _check_equilibrium(self) -> "ProviderEconomics":
        if 1.0 - self.beta * self.eta >= 0.0:
            raise ValueError("provider equilibrium requires beta * eta > 1")
        return self

    def leakage_loss(self, r: float, ds: Value) -> Value:
        """Expected loss from a leak of the traded data."""
        return self.alpha * (1.0 - r) + self.beta * self.eta * ds


class PoolEconomics(BaseModel):
    """Pool's private information: legal net profit and leakage-profit coefficients."""

    model_config = ConfigDict(frozen=True)

    q: float
    alpha_t: float = Field(ge=0.0)
    beta_t: float = Field(ge=0.0)

    def leakage_profit(self, r: float, ds: Value, eta: float) -> Value:
        """Expected extra profit from leaking the traded data."""
        return self.alpha_t * (1.0 - r) + self.beta_t * eta * ds


@dataclass(frozen=True)
class EquilibriumCoefficients:
    """The A0..A3 coefficients of the closed-form pool bid.

    Only A3 depends on the pool; it is an array when several (possibly
    fake) pool reports are evaluated together.
    """

    a0: float
    a1: float
    a2: float
    a3: Value

    @classmethod
    def from_params(
        cls, mk: MarketParams, pe: ProviderEconomics, po: PoolEconomics
    ) -> "EquilibriumCoefficients":
        """Derive the coefficients from the market, the provider and the pool."""
        return cls.for_reports(mk, pe, po.beta_t)

    @classmethod
    def for_reports(
        cls, mk: MarketParams, pe: ProviderEconomics, beta_t: Value
    ) -> "EquilibriumCoefficients":
        """Coefficients for one or many reported pool leakage coefficients."""
        k = pe.beta * pe.eta
        return cls(
            a0=2.0 * mk.eps2 * (k - 1.0),
            a1=mk.eps3 / mk.m_bar,
            a2=mk.eps2 + (1.0 - k) * mk.eps3 * mk.ds_bar / mk.m_bar,
            a3=mk.ds_bar * (beta_t * pe.eta - 1.0),
        )


class TradeQuote(BaseModel):
    """Outcome of a completed negotiation."""

    model_config = ConfigDict(frozen=True)

    m_star: float
    ds_star: float
    p: float = Field(ge=0.0, le=1.0)
    p_raw: float
    final_price: float
    executed: bool

    @model_validator(mode="after")
    def _check_price(self) -> "TradeQuote":
        if self.final_price != self.m_star + self.ds_star:
            raise ValueError("final_price must equal m_star + ds_star")
        return self


class Rejected(BaseModel):
    """A negotiation that ended without a quote."""

    model_config = ConfigDict(frozen=True)

    reason: Literal["declined", "deadline", "inadmissible"]


@dataclass(frozen=True)
class Equilibrium:
    """Both strategies and both utilities at the equilibrium."""

    m_star: float
    ds_star: float
    p_raw: float
    p: float
    pool_utility: float
    provider_utility: float

    @property
    def admissible(self) -> bool:
        """Prices below zero have no market meaning."""
        return is_admissible(self.m_star, self.ds_star)


def _check_reputation(r: float) -> None:
    if not 0.0 <= r <= 1.0:
        raise ParameterError(f"Reputation must lie in [0, 1], got {r}")


def trading_probability_raw(r: float, ds: Value, m: Value, mk: MarketParams) -> Value:
    """Unclamped trading probability; may leave [0, 1] for prices above the ceilings."""
    return mk.eps1 * r + mk.eps2 * ds / mk.ds_bar + mk.eps3 * m / mk.m_bar


def trading_probability(r: float, ds: Value, m: Value, mk: MarketParams) -> Value:
    """Probability that the provider sells to the pool, clamped to [0, 1].

    Raises:
        ParameterError: If the reputation is outside [0, 1] or a price is negative.
    """
    _check_reputation(r)
    if np.any(np.asarray(ds) < 0.0) or np.any(np.asarray(m) < 0.0):
        raise ParameterError("Markup and bid must be non-negative")
    p = np.clip(trading_probability_raw(r, ds, m, mk), 0.0, 1.0)
    return float(p) if np.ndim(p) == 0 else p


def _probability(r: float, ds: Value, m: Value, mk: MarketParams, clamp: bool) -> Value:
    if clamp:
        return trading_probability(r, ds, m, mk)
    return trading_probability_raw(r, ds, m, mk)


def provider_utility_rate(
    m: Value,
    ds: Value,
    r: float,
    mk: MarketParams,
    pe: ProviderEconomics,
    *,
    clamp: bool = True,
) -> Value:
    """Provider's per-round utility F_d = p * (m + D_s - c(r, V))."""
    p = _probability(r, ds, m, mk, clamp)
    return p * (m + ds - pe.leakage_loss(r, ds))


def pool_utility_rate(
    m: Value,
    ds: Value,
    r: float,
    mk: MarketParams,
    pe: ProviderEconomics,
    po: PoolEconomics,
    *,
    clamp: bool = True,
) -> Value:
    """Pool's per-round utility F_p = p * (Q + c~(r, V) - m - D_s)."""
    p = _probability(r, ds, m, mk, clamp)
    return p * (po.q + po.leakage_profit(r, ds, pe.eta) - m - ds)


def provider_markup_rule(
    m: Value, r: float, mk: MarketParams, pe: ProviderEconomics
) -> Value:
    """The provider's published rule D_s*(m).

    The result may be negative for extreme inputs; callers decide admissibility.

    Raises:
        EquilibriumError: If beta * eta <= 1 (the rule would not maximize F_d).
    """
    k = pe.beta * pe.eta
    if 1.0 - k >= 0.0:
        raise EquilibriumError("provider equilibrium requires beta * eta > 1")
    numerator = mk.eps2 * (m - pe.alpha * (1.0 - r)) + (1.0 - k) * mk.ds_bar * (
        mk.eps1 * r + mk.eps3 * m / mk.m_bar
    )
    return numerator / (2.0 * mk.eps2 * (k - 1.0))


def stationary_bid(
    r: float,
    mk: MarketParams,
    pe: ProviderEconomics,
    q: Value,
    alpha_t: Value,
    beta_t: Value,
) -> tuple[Value, Value]:
    """Stationary point of the unclamped F_p(m, D_s*(m)) and its denominator.

    Accepts arrays for the pool's (possibly fake) private information so an
    audit can sweep a whole grid of reports at once. A positive denominator
    means the stationary point is a maximum.
    """
    c = EquilibriumCoefficients.for_reports(mk, pe, beta_t)
    ds_bar = mk.ds_bar
    k = pe.beta * pe.eta
    e1r = mk.eps1 * r
    e2 = mk.eps2
    q_eff = np.asarray(q) + np.asarray(alpha_t) * (1.0 - r)
    intercept = (1.0 - k) * ds_bar * e1r - e2 * pe.alpha * (1.0 - r)

    numerator = (
        c.a0 * c.a2 * c.a3 * e1r
        + (c.a0 * c.a2 * e2 + ds_bar * c.a0**2 * c.a1) * q_eff
        - e1r * ds_bar * c.a0**2
        + (2.0 * e2 * c.a2 * c.a3 / ds_bar + c.a0 * c.a1 * c.a3 - c.a0 * e2)
        * intercept
    )
    denominator = (
        2.0 * e2 * c.a0 * c.a2
        + 2.0 * c.a1 * c.a0**2 * ds_bar
        - 2.0 * e2 * (c.a3 / ds_bar) * c.a2**2
        - 2.0 * c.a0 * c.a1 * c.a2 * c.a3
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        bid = numerator / denominator
    if np.ndim(bid) == 0:
        return float(bid), float(denominator)
    return bid, denominator


def rule_utility(
    m: Value,
    r: float,
    mk: MarketParams,
    pe: ProviderEconomics,
    q: Value,
    alpha_t: Value,
    beta_t: Value,
) -> Value:
    """Pool utility F_p(m, D_s*(m)) along the provider's rule, p clipped to [0, 1].

    Unlike `pool_utility_rate` this never rejects negative prices, so it can
    score whole bid grids and batches of pool reports.
    """
    ds = provider_markup_rule(m, r, mk, pe)
    p = np.clip(trading_probability_raw(r, ds, m, mk), 0.0, 1.0)
    surplus = (
        np.asarray(q)
        + np.asarray(alpha_t) * (1.0 - r)
        + (np.asarray(beta_t) * pe.eta - 1.0) * ds
        - m
    )
    value = p * surplus
    return float(value) if np.ndim(value) == 0 else value


def probability_bounds(
    r: float, mk: MarketParams, pe: ProviderEconomics
) -> tuple[float, float] | None:
    """Bids at which p_raw along the provider's rule reaches 1 and 0.

    p_raw is affine in the bid once D_s*(m) is substituted. Returns None when
    it does not depend on the bid at all.
    """
    ds0 = float(provider_markup_rule(0.0, r, mk, pe))
    ds1 = float(provider_markup_rule(1.0, r, mk, pe))
    p0 = float(trading_probability_raw(r, ds0, 0.0, mk))
    slope = float(trading_probability_raw(r, ds1, 1.0, mk)) - p0
    if math.isclose(slope, 0.0, abs_tol=1e-15):
        return None
    return (1.0 - p0) / slope, -p0 / slope


def clamped_bid(
    r: float,
    mk: MarketParams,
    pe: ProviderEconomics,
    q: Value,
    alpha_t: Value,
    beta_t: Value,
) -> tuple[Value, Value]:
    """Bid maximizing the clamped F_p(m, D_s*(m)), with the closed form's denominator.

    While p stays inside [0, 1] the closed-form stationary point is the
    maximum. Past p = 1 the clamped utility is the surplus alone, which falls
    with the bid, so the optimum sits where p_raw reaches 1; below p = 0 it is
    flat at zero. Scoring the stationary point and both boundary bids
    therefore finds the maximum over every bid. Ties keep the stationary point.
    """
    stationary, denominator = stationary_bid(r, mk, pe, q, alpha_t, beta_t)
    candidates = [np.asarray(stationary, dtype=np.float64)]
    bounds = probability_bounds(r, mk, pe)
    if bounds is not None:
        candidates.extend(np.full_like(candidates[0], b) for b in bounds)
    stacked = np.stack(candidates)
    with np.errstate(invalid="ignore", over="ignore"):
        scores = np.asarray(rule_utility(stacked, r, mk, pe, q, alpha_t, beta_t))
    scores = np.where(np.isfinite(scores), scores, -np.inf)
    choice = np.argmax(scores, axis=0)
    bid = np.take_along_axis(stacked, np.asarray(choice)[np.newaxis], axis=0)[0]
    if np.ndim(bid) == 0:
        return float(bid), float(denominator)
    return bid, denominator


def pool_optimal_bid(
    r: float, mk: MarketParams, pe: ProviderEconomics, po: PoolEconomics
) -> float:
    """The pool's equilibrium bid m* under the provider's rule.

    This is the closed-form stationary point whenever it keeps p within
    [0, 1]; otherwise the bid where p reaches its bound, which earns more.

    Raises:
        EquilibriumError: If beta_t * eta <= 1, or the stationary point is a minimum.
        DegenerateParametersError: If the closed form has a zero denominator.
    """
    _check_reputation(r)
    if 1.0 - pe.beta * pe.eta >= 0.0:
        raise EquilibriumError("provider equilibrium requires beta * eta > 1")
    if 1.0 - po.beta_t * pe.eta >= 0.0:
        raise EquilibriumError("pool equilibrium requires beta_t * eta > 1")
    bid, denominator = clamped_bid(r, mk, pe, po.q, po.alpha_t, po.beta_t)
    assert isinstance(bid, float) and isinstance(denominator, float)
    if math.isclose(denominator, 0.0, abs_tol=1e-15):
        raise DegenerateParametersError("pool bid denominator vanishes")
    if denominator < 0.0:
        raise EquilibriumError("stationary bid minimizes the pool utility")
    return bid


def bid_curvature(mk: MarketParams, pe: ProviderEconomics, po: PoolEconomics) -> float:
    """Second derivative of F_p(m, D_s*(m)) in m; negative at a maximum."""
    coeffs = EquilibriumCoefficients.from_params(mk, pe, po)
    slope = coeffs.a2 / coeffs.a0
    p_slope = mk.eps2 * slope / mk.ds_bar + coeffs.a1
    surplus_slope = (po.beta_t * pe.eta - 1.0) * slope - 1.0
    return 2.0 * p_slope * surplus_slope


def markup_curvature(mk: MarketParams, pe: ProviderEconomics) -> float:
    """Second derivative of F_d in D_s; negative whenever beta * eta > 1."""
    return 2.0 * mk.eps2 * (1.0 - pe.beta * pe.eta) / mk.ds_bar


def _unit_interval(p_raw: float) -> float:
    # a bid placed on a bound lands within rounding of it
    for bound in (0.0, 1.0):
        if math.isclose(p_raw, bound, abs_tol=1e-12):
            return bound
    return min(max(p_raw, 0.0), 1.0)


def solve_equilibrium(
    r: float, mk: MarketParams, pe: ProviderEconomics, po: PoolEconomics
) -> Equilibrium:
    """Evaluate both strategies and both utilities at the clamped probability."""
    m_star = pool_optimal_bid(r, mk, pe, po)
    ds_star = float(provider_markup_rule(m_star, r, mk, pe))
    p_raw = float(trading_probability_raw(r, ds_star, m_star, mk))
    p = _unit_interval(p_raw)
    leak_profit = float(po.leakage_profit(r, ds_star, pe.eta))
    pool_surplus = po.q + leak_profit - m_star - ds_star
    provider_surplus = m_star + ds_star - float(pe.leakage_loss(r, ds_star))
    return Equilibrium(
        m_star=m_star,
        ds_star=ds_star,
        p_raw=p_raw,
        p=p,
        pool_utility=p * pool_surplus,
        provider_utility=p * provider_surplus,
    )


def negotiate_trade(
    pool: PoolEconomics,
    provider: ProviderEconomics,
    r: float,
    mk: MarketParams,
    *,
    rng: random.Random,
    accept: bool = True,
    bid_delay: int = 0,
    deadline: int = 1,
) -> TradeQuote | Rejected:
    """Run the three-phase negotiation and draw whether the trade executes.

    Phase 1 publishes the markup rule, phase 2 lets the pool decline or bid,
    phase 3 evaluates the rule at the bid. A bid arriving after the deadline
    (in simulated ticks) terminates the negotiation.
    """
    # Phase 1
    def rule(m: float) -> float:
        return float(provider_markup_rule(m, r, mk, provider))

    # Phase 2
    if not accept:
        logger.info("trade_declined")
        return Rejected(reason="declined")
    m_star = pool_optimal_bid(r, mk, provider, pool)

    # Phase 3
    if bid_delay > deadline:
        logger.info("trade_deadline_expired", bid_delay=bid_delay, deadline=deadline)
        return Rejected(reason="deadline")
    ds_star = rule(m_star)
    if not is_admissible(m_star, ds_star):
        logger.info("trade_inadmissible", m_star=m_star, ds_star=ds_star)
        return Rejected(reason="inadmissible")

    p_raw = float(trading_probability_raw(r, ds_star, m_star, mk))
    p = _unit_interval(p_raw)
    executed = rng.random() < p
    logger.info(
        "trade_negotiated", m_star=m_star, ds_star=ds_star, p=p, executed=executed
    )
    return TradeQuote(
        m_star=m_star,
        ds_star=ds_star,
        p=p,
        p_raw=p_raw,
        final_price=m_star + ds_star,
        executed=executed,
    )


def equilibrium_coefficients(
    mk: MarketParams, pe: ProviderEconomics, po: PoolEconomics
) -> EquilibriumCoefficients:
    """A0..A3 for one market, provider and pool."""
    return EquilibriumCoefficients.from_params(mk, pe, po)


def is_admissible(m: float, ds: float) -> bool:
    """Whether a bid/markup pair is economically meaningful."""
    return m >= 0.0 and ds >= 0.0


def provider_max_utility(
    r: float, mk: MarketParams, pe: ProviderEconomics, po: PoolEconomics
) -> float:
    """Provider's per-round utility at the equilibrium."""
    return solve_equilibrium(r, mk, pe, po).provider_utility


def pool_max_utility(
    r: float, mk: MarketParams, pe: ProviderEconomics, po: PoolEconomics
) -> float:
    """Pool's per-round utility at the equilibrium, the most its bid can earn."""
    return solve_equilibrium(r, mk, pe, po).pool_utility
