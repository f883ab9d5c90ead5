"""
Runtime Settings.

Process-level knobs read from the environment (and an optional .env file).
"""

import os
from functools import lru_cache

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class RuntimeSettings(BaseSettings):
    """Environment-driven settings, prefixed SSMRADNET_."""

    model_config = SettingsConfigDict(env_prefix="SSMRADNET_", env_file=".env", extra="ignore")

    threads: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1)
    log_level: str = "INFO"
    run_slow: bool = False


@lru_cache(maxsize=1)
def get_settings() -> RuntimeSettings:
    """Get cached settings instance."""
    return RuntimeSettings()
