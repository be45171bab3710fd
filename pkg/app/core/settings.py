"""Environment-driven runtime settings (BMF_* variables, optional .env file)."""

from pathlib import Path
from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class RuntimeSettings(BaseSettings):
    """Process-level knobs that do not belong in the YAML config."""

    model_config = SettingsConfigDict(env_prefix="BMF_", env_file=".env", extra="ignore")

    num_workers: int = Field(1, ge=1, description="Parallel bench repetitions")
    log_level: str = "WARNING"
    config_path: Optional[Path] = None


def get_settings() -> RuntimeSettings:
    return RuntimeSettings()
