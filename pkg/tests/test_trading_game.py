"""Tests for the data trading game and its brute-force oracle."""

import random

import numpy as np
import pytest

from pofl_sim.errors import EquilibriumError, ParameterError
from pofl_sim.trading.game import (
    MarketParams,
    PoolEconomics,
    ProviderEconomics,
    Rejected,
    TradeQuote,
    equilibrium_coefficients,
    negotiate_trade,
    pool_max_utility,
    pool_optimal_bid,
    pool_utility_rate,
    provider_markup_rule,
    provider_max_utility,
    provider_utility_rate,
    solve_equilibrium,
    trading_probability,
)
from pofl_sim.trading.oracle import (
    GridSpec,
    audit_draws,
    fake_report_grid,
    grid_argmax_bid,
    grid_argmax_markup,
    ic_audit,
    random_admissible_draws,
)

COARSE = GridSpec(step=1e-3, span=5.0)


class TestTradingProbability:
    """Tests for the public trading-probability rule."""

    def test_weighted_sum(self, market: MarketParams) -> None:
        """p = eps1 r + eps2 D_s / ds_bar + eps3 m / m_bar."""
        p = trading_probability(0.5, 2.0, 1.0, market)
        assert p == pytest.approx(0.4 * 0.5 + 0.4 * 0.5 + 0.2 * 0.25)

    def test_clamped_to_one(self, market: MarketParams) -> None:
        """Prices far above the ceilings cannot push p past 1."""
        assert trading_probability(1.0, 40.0, 40.0, market) == 1.0

    def test_rejects_reputation_out_of_range(self, market: MarketParams) -> None:
        """Reputations outside [0, 1] are a parameter error."""
        with pytest.raises(ParameterError):
            trading_probability(1.5, 1.0, 1.0, market)

    def test_rejects_negative_prices(self, market: MarketParams) -> None:
        """Negative bids and markups are a parameter error."""
        with pytest.raises(ParameterError):
            trading_probability(0.5, -1.0, 1.0, market)

    def test_weights_must_leave_room_for_the_bid(self) -> None:
        """eps1 + eps2 above 1 fails validation."""
        with pytest.raises(ValueError, match="eps1 \\+ eps2"):
            MarketParams(eps1=0.7, eps2=0.5, m_bar=1.0, ds_bar=1.0)


class TestEquilibrium:
    """Closed-form strategies at a hand-computed point."""

    def test_golden_values(
        self,
        market: MarketParams,
        provider: ProviderEconomics,
        pool: PoolEconomics,
    ) -> None:
        """At alpha = alpha_t = 1.5, Q = 8, r = 0.5 the equilibrium is exact."""
        eq = solve_equilibrium(0.5, market, provider, pool)
        assert eq.m_star == pytest.approx(143 / 28)
        assert eq.ds_star == pytest.approx(25 / 56)
        assert eq.p == pytest.approx(0.5)
        assert eq.pool_utility == pytest.approx(2.0)
        assert eq.provider_utility == pytest.approx(2.0)
        assert eq.admissible

    def test_coefficients(
        self,
        market: MarketParams,
        provider: ProviderEconomics,
        pool: PoolEconomics,
    ) -> None:
        """A0..A3 for k = 1.8 and unit price ceilings of 4."""
        c = equilibrium_coefficients(market, provider, pool)
        assert c.a0 == pytest.approx(0.64)
        assert c.a1 == pytest.approx(0.05)
        assert c.a2 == pytest.approx(0.24)
        assert c.a3 == pytest.approx(3.2)

    def test_unit_ceiling_rule_and_rates(self, provider: ProviderEconomics) -> None:
        """Hand-computed markup and utility rates with unit price ceilings."""
        unit = MarketParams(eps1=0.4, eps2=0.4, m_bar=1.0, ds_bar=1.0)
        pool = PoolEconomics(q=8.0, alpha_t=1.5, beta_t=1.0)
        assert provider_markup_rule(2.0, 0.5, unit, provider) == pytest.approx(0.03125)
        assert pool_utility_rate(0.5, 0.5, 0.5, unit, provider, pool) == pytest.approx(
            4.325
        )
        assert provider_utility_rate(0.5, 0.5, 0.5, unit, provider) == pytest.approx(
            -0.325
        )

    def test_max_utilities_match_solver(
        self,
        market: MarketParams,
        provider: ProviderEconomics,
        pool: PoolEconomics,
    ) -> None:
        """The utility shortcuts agree with the full solution."""
        eq = solve_equilibrium(0.3, market, provider, pool)
        assert pool_max_utility(0.3, market, provider, pool) == eq.pool_utility
        assert provider_max_utility(0.3, market, provider, pool) == eq.provider_utility

    def test_markup_rule_at_the_bid(
        self,
        market: MarketParams,
        provider: ProviderEconomics,
        pool: PoolEconomics,
    ) -> None:
        """D_s* is the provider's rule evaluated at m*."""
        m = pool_optimal_bid(0.5, market, provider, pool)
        eq = solve_equilibrium(0.5, market, provider, pool)
        assert provider_markup_rule(m, 0.5, market, provider) == pytest.approx(
            eq.ds_star
        )

    def test_provider_condition(self) -> None:
        """beta * eta <= 1 leaves the provider without a maximum."""
        with pytest.raises(ValueError, match="beta \\* eta"):
            ProviderEconomics(alpha=1.0, beta=0.5, eta=1.8)

    def test_pool_condition(
        self, market: MarketParams, provider: ProviderEconomics
    ) -> None:
        """beta_t * eta <= 1 leaves the pool without a maximum."""
        weak = PoolEconomics(q=8.0, alpha_t=1.5, beta_t=0.5)
        with pytest.raises(EquilibriumError):
            pool_optimal_bid(0.5, market, provider, weak)


class TestClampedEquilibrium:
    """The bid when the closed-form stationary point would push p past 1."""

    UNIT = MarketParams(eps1=0.4, eps2=0.4, m_bar=1.0, ds_bar=1.0)

    def test_bid_stops_where_p_reaches_one(
        self, provider: ProviderEconomics, pool: PoolEconomics
    ) -> None:
        """With unit ceilings the pool bids exactly up to p = 1."""
        eq = solve_equilibrium(0.5, self.UNIT, provider, pool)
        assert eq.m_star == pytest.approx(87 / 28)
        assert eq.ds_star == pytest.approx(25 / 56)
        assert 0.0 <= eq.p <= 1.0
        assert eq.p == 1.0
        assert eq.pool_utility == pytest.approx(6.0)
        assert eq.provider_utility == pytest.approx(2.0)

    def test_reported_utilities_use_the_clamped_probability(
        self, provider: ProviderEconomics, pool: PoolEconomics
    ) -> None:
        """The solver's utilities equal F_p and F_d at its own strategies."""
        eq = solve_equilibrium(0.5, self.UNIT, provider, pool)
        assert eq.pool_utility == pytest.approx(
            pool_utility_rate(eq.m_star, eq.ds_star, 0.5, self.UNIT, provider, pool)
        )
        assert eq.provider_utility == pytest.approx(
            provider_utility_rate(eq.m_star, eq.ds_star, 0.5, self.UNIT, provider)
        )

    def test_matches_the_grid_argmax(
        self, provider: ProviderEconomics, pool: PoolEconomics
    ) -> None:
        """Brute force over the clamped utility finds the same bid."""
        grid = GridSpec()
        m_star = pool_optimal_bid(0.5, self.UNIT, provider, pool)
        found = grid_argmax_bid(0.5, self.UNIT, provider, pool, grid)
        assert abs(found - m_star) <= grid.step

    def test_more_profit_keeps_the_capped_bid(
        self, provider: ProviderEconomics, pool: PoolEconomics
    ) -> None:
        """Doubling Q cannot raise p past 1, so only the pool's utility grows."""
        rich = pool.model_copy(update={"q": 16.0})
        base = solve_equilibrium(0.5, self.UNIT, provider, pool)
        eq = solve_equilibrium(0.5, self.UNIT, provider, rich)
        assert eq.m_star >= base.m_star
        assert eq.m_star == pytest.approx(87 / 28)
        assert eq.pool_utility == pytest.approx(14.0)

    def test_quote_uses_the_capped_bid(
        self, provider: ProviderEconomics, pool: PoolEconomics
    ) -> None:
        """Negotiation quotes the clamped bid and always executes at p = 1."""
        quote = negotiate_trade(pool, provider, 0.5, self.UNIT, rng=random.Random(1))
        assert isinstance(quote, TradeQuote)
        assert quote.m_star == pytest.approx(87 / 28)
        assert quote.p == 1.0
        assert quote.executed

    def test_ic_audit_holds_on_the_boundary(
        self, provider: ProviderEconomics, pool: PoolEconomics
    ) -> None:
        """Fake reports cannot beat the truthful report past the clamp either."""
        grid = fake_report_grid(pool, steps=9)
        assert ic_audit(pool, provider, 0.5, self.UNIT, grid)


class TestTrends:
    """Comparative statics of the equilibrium."""

    def test_p_flat_in_reputation_when_loss_and_profit_balance(
        self,
        market: MarketParams,
        provider: ProviderEconomics,
        pool: PoolEconomics,
    ) -> None:
        """With alpha = alpha_t the reputation terms cancel in p*."""
        ps = [solve_equilibrium(r, market, provider, pool).p for r in (0.1, 0.5, 0.9)]
        assert ps == pytest.approx([0.5, 0.5, 0.5])

    def test_p_rises_with_reputation(
        self, market: MarketParams, pool: PoolEconomics
    ) -> None:
        """dp*/dr = eps2 (alpha - alpha_t) / (2 ds_bar (k - 1)) when alpha > alpha_t."""
        provider = ProviderEconomics(alpha=3.0, beta=1.0, eta=1.8)
        rs = [0.1, 0.3, 0.5, 0.7, 0.9]
        ps = [solve_equilibrium(r, market, provider, pool).p_raw for r in rs]
        slope = 0.4 * 1.5 / (2 * 4.0 * 0.8)
        assert np.diff(ps) == pytest.approx([slope * 0.2] * 4)

    @pytest.mark.parametrize("field", ["q", "alpha_t"])
    def test_increasing_in_pool_value(
        self,
        field: str,
        market: MarketParams,
        provider: ProviderEconomics,
        pool: PoolEconomics,
    ) -> None:
        """More legal profit or leakage profit raises p and both utilities."""
        base = getattr(pool, field)
        eqs = [
            solve_equilibrium(
                0.5,
                market,
                provider,
                pool.model_copy(update={field: base + step}),
            )
            for step in (-0.5, 0.0, 0.5, 1.0)
        ]
        for attr in ("p", "pool_utility", "provider_utility"):
            values = [getattr(eq, attr) for eq in eqs]
            assert all(b > a for a, b in zip(values, values[1:], strict=False))

    def test_doubling_q_raises_the_interior_bid(
        self,
        market: MarketParams,
        provider: ProviderEconomics,
        pool: PoolEconomics,
    ) -> None:
        base = solve_equilibrium(0.5, market, provider, pool)
        doubled = solve_equilibrium(
            0.5, market, provider, pool.model_copy(update={"q": 2 * pool.q})
        )
        assert base.m_star == pytest.approx(5.107143, abs=1e-6)
        assert doubled.m_star == pytest.approx(10.821429, abs=1e-6)
        assert doubled.m_star > base.m_star

    def test_increasing_in_leak_coefficient(self) -> None:
        """With eta = 0.5 and k = 1.5, a larger beta_t raises all three."""
        market = MarketParams(eps1=0.4, eps2=0.4, m_bar=10.0, ds_bar=10.0)
        provider = ProviderEconomics(alpha=5.0, beta=3.0, eta=0.5)
        eqs = [
            solve_equilibrium(
                0.5, market, provider, PoolEconomics(q=20.0, alpha_t=5.0, beta_t=b)
            )
            for b in (2.2, 2.4, 2.6, 2.8, 3.0)
        ]
        assert all(eq.p < 1.0 for eq in eqs)
        for attr in ("p", "pool_utility", "provider_utility"):
            values = [getattr(eq, attr) for eq in eqs]
            assert all(b > a for a, b in zip(values, values[1:], strict=False))


class TestNegotiation:
    """Tests for the three-phase negotiation."""

    def test_executes_with_probability_one(
        self, market: MarketParams, provider: ProviderEconomics
    ) -> None:
        """A rich pool pushes p to 1, so the trade always executes."""
        rich = PoolEconomics(q=20.0, alpha_t=1.5, beta_t=1.0)
        quote = negotiate_trade(rich, provider, 0.6, market, rng=random.Random(0))
        assert isinstance(quote, TradeQuote)
        assert quote.executed
        assert quote.p == 1.0
        assert quote.p_raw == pytest.approx(1.0)
        assert quote.m_star == pytest.approx(10.485714, abs=1e-6)
        assert quote.final_price == quote.m_star + quote.ds_star

    def test_declined(
        self,
        market: MarketParams,
        provider: ProviderEconomics,
        pool: PoolEconomics,
    ) -> None:
        """A pool that does not accept the rule ends the negotiation."""
        quote = negotiate_trade(
            pool, provider, 0.5, market, rng=random.Random(0), accept=False
        )
        assert quote == Rejected(reason="declined")

    def test_deadline(
        self,
        market: MarketParams,
        provider: ProviderEconomics,
        pool: PoolEconomics,
    ) -> None:
        """A bid later than the deadline terminates the negotiation."""
        quote = negotiate_trade(
            pool, provider, 0.5, market, rng=random.Random(0), bid_delay=3, deadline=2
        )
        assert quote == Rejected(reason="deadline")

    def test_negative_markup_is_inadmissible(
        self, market: MarketParams, pool: PoolEconomics
    ) -> None:
        """alpha = 3 at r = 0.5 makes the provider's markup slightly negative."""
        provider = ProviderEconomics(alpha=3.0, beta=1.0, eta=1.8)
        quote = negotiate_trade(pool, provider, 0.5, market, rng=random.Random(0))
        assert quote == Rejected(reason="inadmissible")

    def test_execution_draw_is_seeded(
        self,
        market: MarketParams,
        provider: ProviderEconomics,
        pool: PoolEconomics,
    ) -> None:
        """The same RNG seed gives the same execution outcome."""
        draws = [
            negotiate_trade(pool, provider, 0.5, market, rng=random.Random(42))
            for _ in range(2)
        ]
        assert draws[0] == draws[1]


class TestOracle:
    """Closed forms against brute-force grid search."""

    def test_closed_form_matches_grid(self) -> None:
        """m* and D_s*(m*) lie within one grid step of the grid argmax."""
        for draw in random_admissible_draws(5, seed=3, grid=COARSE):
            mk, pe, po, r = draw.market, draw.provider, draw.pool, draw.r
            m_star = pool_optimal_bid(r, mk, pe, po)
            ds_star = float(provider_markup_rule(m_star, r, mk, pe))
            assert abs(grid_argmax_bid(r, mk, pe, po, COARSE) - m_star) <= COARSE.step
            assert (
                abs(grid_argmax_markup(m_star, r, mk, pe, COARSE) - ds_star)
                <= COARSE.step
            )

    def test_truthful_report_is_optimal(
        self,
        market: MarketParams,
        provider: ProviderEconomics,
        pool: PoolEconomics,
    ) -> None:
        """No fake (Q, alpha_t, beta_t) report beats the truth."""
        assert ic_audit(pool, provider, 0.5, market, fake_report_grid(pool, steps=9))

    def test_ic_audit_catches_a_better_report(
        self,
        market: MarketParams,
        provider: ProviderEconomics,
        pool: PoolEconomics,
    ) -> None:
        """A negative tolerance turns any equally good report into a violation."""
        truth = [(pool.q, pool.alpha_t, pool.beta_t)]
        assert not ic_audit(pool, provider, 0.5, market, truth, tolerance=-1.0)

    def test_fake_grid_size(self, pool: PoolEconomics) -> None:
        """Every combination of the three perturbation factors."""
        assert len(fake_report_grid(pool, steps=5)) == 125

    def test_audit_draws(self) -> None:
        """A small seeded audit passes."""
        audit = audit_draws(3, seed=5, grid=COARSE, fake_steps=5)
        assert audit.draws == 3
        assert audit.passed
