"""Scenario files: the actors, economics and workload of a simulation.

Scenarios are TOML documents validated into frozen pydantic models. Every
economic block re-checks its equilibrium conditions at load time, so a bad
file is rejected with the offending field named.
"""

import tomllib
from importlib import resources
from pathlib import Path
from typing import Self

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from pofl_sim.chain.block import Task
from pofl_sim.config import OTGroupName, Settings
from pofl_sim.errors import ParameterError
from pofl_sim.federated.mining import TrainingConfig
from pofl_sim.trading.game import MarketParams, PoolEconomics, ProviderEconomics


class ProviderConfig(BaseModel):
    """A data provider and the training records it can sell."""

    model_config = ConfigDict(frozen=True)

    provider_id: str = Field(min_length=1)
    economics: ProviderEconomics
    records: int = Field(default=240, ge=1, description="Training records on offer")


class PoolConfig(BaseModel):
    """A mining pool: its miners, private economics and behaviour."""

    model_config = ConfigDict(frozen=True)

    pool_id: str = Field(min_length=1)
    miners: int = Field(ge=1, description="Pool size K")
    economics: PoolEconomics
    reputation: float = Field(default=0.5, ge=0.0, le=1.0)
    provider: str | None = Field(
        default=None, description="Provider to buy from; the first one by default"
    )
    leak_probability: float = Field(default=0.0, ge=0.0, le=1.0)
    inflate_claim: int = Field(
        default=0, ge=0, description="Extra matches claimed in the block header"
    )
    epochs_per_tick: int = Field(default=1, ge=1, description="Training speed")


class RequesterConfig(BaseModel):
    """The task publisher's private test set and the classification task."""

    model_config = ConfigDict(frozen=True)

    requester_id: str = Field(default="requester", min_length=1)
    test_records: int = Field(default=32, ge=1, description="Test-set size I")
    dimension: int = Field(default=4, ge=1)
    classes: int = Field(default=3, ge=2)
    hidden: int = Field(default=4, ge=1, description="First-layer width K")
    label_bits: int = Field(default=8, ge=1, le=16)
    spread: float = Field(default=0.6, gt=0.0)

    @model_validator(mode="after")
    def _check_labels(self) -> Self:
        if self.classes > 2**self.label_bits:
            raise ValueError(
                f"{self.classes} classes do not fit in {self.label_bits} label bits"
            )
        return self


class CryptoConfig(BaseModel):
    """Key and group sizes; absent values come from the process settings."""

    model_config = ConfigDict(frozen=True)

    he_key_bits: int | None = Field(default=None, ge=512)
    ot_group: OTGroupName | None = None
    encrypt_updates: bool = True

    def key_bits(self, settings: Settings) -> int:
        return self.he_key_bits or settings.he_key_bits

    def group(self, settings: Settings) -> OTGroupName:
        return self.ot_group or settings.ot_group


class ScenarioConfig(BaseModel):
    """A complete, seeded simulation scenario."""

    model_config = ConfigDict(frozen=True)

    seed: int = Field(ge=0)
    full_nodes: int = Field(default=3, ge=1)
    market: MarketParams
    providers: tuple[ProviderConfig, ...] = Field(min_length=1)
    pools: tuple[PoolConfig, ...] = Field(min_length=1)
    requester: RequesterConfig = RequesterConfig()
    training: TrainingConfig
    tasks: tuple[Task, ...] = Field(min_length=1)
    crypto: CryptoConfig = CryptoConfig()

    @model_validator(mode="after")
    def _check_references(self) -> Self:
        provider_ids = [p.provider_id for p in self.providers]
        pool_ids = [p.pool_id for p in self.pools]
        task_ids = [t.task_id for t in self.tasks]
        for name, ids in (
            ("provider", provider_ids),
            ("pool", pool_ids),
            ("task", task_ids),
        ):
            if len(set(ids)) != len(ids):
                raise ValueError(f"duplicate {name} ids")
        for pool in self.pools:
            if pool.provider is not None and pool.provider not in provider_ids:
                raise ValueError(
                    f"pool {pool.pool_id} names unknown provider {pool.provider}"
                )
            provider = self.provider_for(pool)
            if pool.economics.beta_t * provider.economics.eta <= 1.0:
                raise ValueError(
                    f"pools.{pool.pool_id}.economics.beta_t: "
                    f"1 - beta_t*eta must be negative"
                )
        for task in self.tasks:
            if task.record_count != self.requester.test_records:
                raise ValueError(
                    f"tasks.{task.task_id}.record_count must equal "
                    f"requester.test_records"
                )
        return self

    def provider_for(self, pool: PoolConfig) -> ProviderConfig:
        if pool.provider is None:
            return self.providers[0]
        return next(p for p in self.providers if p.provider_id == pool.provider)

    def pool(self, pool_id: str) -> PoolConfig:
        return next(p for p in self.pools if p.pool_id == pool_id)

    def widths(self) -> tuple[int, int, int]:
        r = self.requester
        return (r.dimension, r.hidden, r.classes)


def _with_record_counts(raw: dict[str, object]) -> dict[str, object]:
    """Tasks inherit I from the requester when the file leaves it out."""
    requester = raw.get("requester")
    test_records = (
        requester.get("test_records", RequesterConfig().test_records)
        if isinstance(requester, dict)
        else RequesterConfig().test_records
    )
    tasks = raw.get("tasks")
    if isinstance(tasks, list):
        raw = {
            **raw,
            "tasks": [
                {"record_count": test_records, **t} if isinstance(t, dict) else t
                for t in tasks
            ],
        }
    return raw


def parse_scenario(raw: dict[str, object]) -> ScenarioConfig:
    """Validate a decoded scenario document.

    Raises:
        ParameterError: Naming the first offending field.
    """
    try:
        return ScenarioConfig.model_validate(_with_record_counts(raw))
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(part) for part in first["loc"]) or "scenario"
        raise ParameterError(f"{where}: {first['msg']}") from exc


def load_scenario(path: Path) -> ScenarioConfig:
    """Read and validate a scenario TOML file.

    Raises:
        ParameterError: If the file is not valid TOML or fails validation.
    """
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ParameterError(f"{path}: {exc}") from exc
    return parse_scenario(raw)


def default_scenario() -> ScenarioConfig:
    """The scenario bundled with the package."""
    source = resources.files("pofl_sim.simulation").joinpath("default.toml")
    return parse_scenario(tomllib.loads(source.read_text(encoding="utf-8")))
