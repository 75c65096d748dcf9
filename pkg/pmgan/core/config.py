"""Runtime settings."""

from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-wide settings read from the environment (prefix ``PMGAN_``)."""

    model_config = SettingsConfigDict(
        env_prefix="PMGAN_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    app_name: str = "pmgan"

    # Default directory for run artifacts when a command gets no --out
    output_dir: Path = Field(default=Path("runs"))

    # Logging
    log_level: str = Field(default="INFO")
    log_json: bool = Field(default=False)

    # Monitoring
    metrics_enabled: bool = Field(default=True)


settings = Settings()
