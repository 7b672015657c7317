"""Shared test fixtures."""

import time
import tomllib
from collections.abc import AsyncIterator
from pathlib import Path

import httpx
import pytest
from httpx import ASGITransport

from pofl_sim.config import Environment, Settings
from pofl_sim.logging import setup_logging
from pofl_sim.simulation.orchestrator import SimulationState, run_round
from pofl_sim.simulation.scenario import ScenarioConfig, parse_scenario
from pofl_sim.store import ReportStore
from pofl_sim.trading.game import MarketParams, PoolEconomics, ProviderEconomics
from pofl_sim.verification.he import HEKeyPair, keygen

# Initialize logging for tests
setup_logging(Environment.TESTING, "debug")

FIXTURES_DIR = Path(__file__).parent / "fixtures"


def _testing_settings() -> Settings:
    return Settings(
        app_env=Environment.TESTING,
        app_host="127.0.0.1",
        app_port=8000,
        log_level="debug",
        db_path="",
    )


@pytest.fixture
def test_settings() -> Settings:
    """Settings configured for testing: small keys, no database."""
    return _testing_settings()


@pytest.fixture(scope="session")
def keypair() -> HEKeyPair:
    """A seeded 512-bit Paillier key pair shared across the session."""
    return keygen(512, seed=1)


@pytest.fixture(scope="session")
def other_keypair() -> HEKeyPair:
    return keygen(512, seed=2)


@pytest.fixture
def market() -> MarketParams:
    """eps1 = eps2 = 0.4 with both price ceilings at 4."""
    return MarketParams(eps1=0.4, eps2=0.4, m_bar=4.0, ds_bar=4.0)


@pytest.fixture
def provider() -> ProviderEconomics:
    return ProviderEconomics(alpha=1.5, beta=1.0, eta=1.8)


@pytest.fixture
def pool() -> PoolEconomics:
    return PoolEconomics(q=8.0, alpha_t=1.5, beta_t=1.0)


def _load_doc() -> dict[str, object]:
    path = FIXTURES_DIR / "scenario.toml"
    return tomllib.loads(path.read_text(encoding="utf-8"))


@pytest.fixture
def scenario_doc() -> dict[str, object]:
    """Freshly decoded fixture scenario; tests may edit it before parsing."""
    return _load_doc()


@pytest.fixture
def scenario(scenario_doc: dict[str, object]) -> ScenarioConfig:
    """Two pools, one data provider, two tasks, an 8-record test set."""
    return parse_scenario(scenario_doc)


@pytest.fixture(scope="session")
def finished_run() -> SimulationState:
    """The fixture scenario run to completion; shared, so never mutate it."""
    config = parse_scenario(_load_doc())
    settings = _testing_settings()
    state = SimulationState(config)
    while state.pending:
        run_round(config, state, settings)
    return state


@pytest.fixture
async def store(finished_run: SimulationState) -> ReportStore:
    """A report store holding the finished run."""
    s = ReportStore(db_path=None)
    await s.replace_all(finished_run.reports, finished_run.chain)
    return s


@pytest.fixture
async def app(test_settings: Settings, store: ReportStore) -> AsyncIterator[object]:
    """Create a test FastAPI app with a pre-populated store."""
    from pofl_sim.app import create_app

    application = create_app(settings=test_settings)
    # Override lifespan by setting state directly
    application.state.store = store
    application.state.settings = test_settings
    application.state.start_time = time.monotonic()

    yield application


@pytest.fixture
async def client(app: object) -> AsyncIterator[httpx.AsyncClient]:
    """Async HTTP test client."""
    transport = ASGITransport(app=app)  # type: ignore[arg-type]
    async with httpx.AsyncClient(transport=transport, base_url="http://test") as c:
        yield c
