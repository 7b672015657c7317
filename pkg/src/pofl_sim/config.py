"""Process configuration loaded from environment variables."""

from enum import StrEnum
from pathlib import Path
from typing import Literal, Self

from pydantic import Field, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Environment(StrEnum):
    """Application environment."""

    DEVELOPMENT = "development"
    PRODUCTION = "production"
    TESTING = "testing"


OTGroupName = Literal["modp1024", "modp2048"]


class Settings(BaseSettings):
    """Simulator settings loaded from `POFL_*` environment variables."""

    model_config = SettingsConfigDict(
        env_prefix="POFL_", env_file=".env", env_file_encoding="utf-8"
    )

    app_env: Environment = Field(default=Environment.PRODUCTION)
    app_host: str = Field(default="127.0.0.1")
    app_port: int = Field(default=8000)
    log_level: str = Field(default="info")
    db_path: str = Field(default="data/pofl.db")
    he_key_bits: int = Field(default=2048, ge=512, description="Paillier modulus bits")
    ot_group: OTGroupName = Field(default="modp2048")
    fixed_point_bits: int = Field(default=24, ge=8, le=64)
    grid_step: float = Field(default=1e-4, gt=0)
    grid_span: float = Field(
        default=5.0, gt=0, description="Oracle grid bound in units of m_bar or ds_bar"
    )

    @model_validator(mode="after")
    def _testing_profile(self) -> Self:
        """Small keys and the 1024-bit group unless set explicitly."""
        if self.app_env == Environment.TESTING:
            if "he_key_bits" not in self.model_fields_set:
                self.he_key_bits = 512
            if "ot_group" not in self.model_fields_set:
                self.ot_group = "modp1024"
        return self

    @property
    def db_file(self) -> Path | None:
        """Return the report database path, creating parent dirs if needed."""
        if not self.db_path:
            return None
        path = Path(self.db_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    @property
    def is_testing(self) -> bool:
        """Check if running in test environment."""
        return self.app_env == Environment.TESTING


def get_settings() -> Settings:
    """Create a Settings instance."""
    return Settings()
