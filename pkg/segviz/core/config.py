"""Process configuration using pydantic-settings."""

from functools import lru_cache
from pathlib import Path

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-wide settings loaded from ``SEGVIZ_*`` environment variables."""

    model_config = SettingsConfigDict(
        env_prefix="SEGVIZ_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Paths
    base_dir: Path = Path(__file__).parent.parent.parent
    config_dir: Path = base_dir / "configs"
    default_config: Path = config_dir / "desk.conf"
    runs_dir: Path = base_dir / "runs"

    # Logging
    log_level: str = "INFO"

    # Numerics
    check_numerics: bool = False  # raise on NaN/Inf after every tensor op

    # Transport
    hello_timeout_s: float = 30.0
    connect_timeout_s: float = 30.0
    connect_retry_interval_s: float = 0.2


@lru_cache
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()


settings = get_settings()
