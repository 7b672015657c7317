"""Tests for one-parameter sweeps."""

import pytest

from pofl_sim.config import Settings
from pofl_sim.errors import UsageError
from pofl_sim.simulation.scenario import ScenarioConfig
from pofl_sim.simulation.sweeps import LearningSweep, SweepTable, run_sweep
from pofl_sim.trading.game import solve_equilibrium
from pofl_sim.verification.ot import get_group, ot_message_bytes

SHORT = LearningSweep(max_epochs=30)


def _increasing(values: list[object]) -> bool:
    floats = [float(v) for v in values]  # type: ignore[arg-type]
    return all(b > a for a, b in zip(floats, floats[1:], strict=False))


class TestTradingSweeps:
    """Sweeps of the first pool's equilibrium."""

    def test_rows_match_the_solver(self, scenario: ScenarioConfig) -> None:
        table = run_sweep(scenario, "r", [0.2, 0.6])
        pool = scenario.pools[0]
        provider = scenario.provider_for(pool).economics
        for row in table.rows:
            r = float(row[0])  # type: ignore[arg-type]
            eq = solve_equilibrium(r, scenario.market, provider, pool.economics)
            assert row[1:] == (
                eq.m_star,
                eq.ds_star,
                eq.p,
                eq.pool_utility,
                eq.provider_utility,
            )

    def test_columns(self, scenario: ScenarioConfig) -> None:
        table = run_sweep(scenario, "alpha_t", [1.0])
        assert table.columns == (
            "alpha_t",
            "m_star",
            "ds_star",
            "p",
            "pool_utility",
            "provider_utility",
        )

    def test_bid_rises_with_legal_profit(self, scenario: ScenarioConfig) -> None:
        table = run_sweep(scenario, "Q", [8.0, 12.0, 16.0, 20.0])
        assert _increasing(table.column("m_star"))
        assert _increasing(table.column("ds_star"))
        assert all(p is not None and p <= 1.0 for p in table.column("p"))

    def test_leak_coefficient_axis(self, scenario: ScenarioConfig) -> None:
        """At p = 1 a larger beta_t only adds to the pool's leakage profit."""
        table = run_sweep(scenario, "beta_t", [1.0, 1.2])
        assert table.column("beta_t") == [1.0, 1.2]
        first, second = table.column("m_star")
        assert first == pytest.approx(second)
        assert first == pytest.approx(10.914286, abs=1e-6)
        assert table.column("p") == [1.0, 1.0]
        assert _increasing(table.column("pool_utility"))


class TestLearningSweeps:
    """Learning-rate and data-share sweeps."""

    def test_large_rate_diverges(self, scenario: ScenarioConfig) -> None:
        table = run_sweep(scenario, "zeta", [0.01, 0.3, 1.5])
        slow, fast, wild = table.rows
        assert wild[2] == 1
        assert wild[1] is None
        assert isinstance(wild[3], int)
        assert fast[2] == 0
        assert fast[1] is not None
        assert slow[1] is None or slow[1] > fast[1]

    def test_share_changes_only_the_pool_size(
        self, scenario: ScenarioConfig
    ) -> None:
        """Federated training equals centralized, whatever the split."""
        table = run_sweep(scenario, "S", [0.25, 0.5, 1.0], learning=SHORT)
        assert table.column("miners") == [4, 2, 1]
        epochs = table.column("epochs_to_accuracy")
        assert epochs[0] == epochs[1] == epochs[2]
        finals = table.column("final_accuracy")
        assert finals[0] == pytest.approx(finals[2])

    def test_share_range(self, scenario: ScenarioConfig) -> None:
        with pytest.raises(UsageError, match="data share"):
            run_sweep(scenario, "S", [1.5], learning=SHORT)


class TestSizeSweep:
    """Gate counts and byte model against the test-set size."""

    @pytest.fixture
    def table(self, scenario: ScenarioConfig, test_settings: Settings) -> SweepTable:
        return run_sweep(scenario, "I", [8, 1024], settings=test_settings)

    def test_table_normalization(self, table: SweepTable) -> None:
        assert table.column("table_nonfree") == [20, 6144]
        assert table.column("table_formula") == table.column("table_nonfree")

    def test_raw_count_includes_the_comparisons(
        self, table: SweepTable
    ) -> None:
        raw = table.column("raw_nonfree")
        assert raw[0] is not None and raw[0] >= 8

    def test_he_bytes_linear(self, table: SweepTable) -> None:
        """64-byte key plus six 128-byte ciphertexts and three floats per record."""
        per_record = 6 * 128 + 3 * 8
        assert table.column("he_bytes") == [
            64 + 8 * per_record,
            64 + 1024 * per_record,
        ]

    def test_ot_bytes(self, table: SweepTable) -> None:
        group = get_group("modp1024")
        assert table.column("ot_bytes") == [
            ot_message_bytes(group, 16),
            ot_message_bytes(group, 2048),
        ]

    def test_csv(self, table: SweepTable) -> None:
        lines = table.to_csv().splitlines()
        assert lines[0] == (
            "I,raw_nonfree,table_nonfree,table_formula,he_bytes,ot_bytes,gc_bytes"
        )
        assert lines[1].startswith("8,")

    def test_positive_sizes(
        self, scenario: ScenarioConfig, test_settings: Settings
    ) -> None:
        with pytest.raises(UsageError):
            run_sweep(scenario, "I", [0], settings=test_settings)


class TestUsage:
    def test_unknown_axis(self, scenario: ScenarioConfig) -> None:
        with pytest.raises(UsageError, match="unknown sweep axis"):
            run_sweep(scenario, "eps9", [1.0])

    def test_no_values(self, scenario: ScenarioConfig) -> None:
        with pytest.raises(UsageError, match="at least one value"):
            run_sweep(scenario, "r", [])

    def test_missing_cells_are_blank(self) -> None:
        table = SweepTable(axis="zeta", columns=("zeta", "x"), rows=((1.5, None),))
        assert table.to_csv() == "zeta,x\n1.5,\n"
