"""
Configuration management using Pydantic Settings.

This module defines the Settings class that loads process-level configuration
from environment variables and .env files, plus the loader that turns an
experiment config file into a validated ExperimentConfig.
"""

import json
from pathlib import Path
from typing import Any, Literal

from pydantic import Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from sagerl.models.experiment import ExperimentConfig


class ConfigurationError(Exception):
    """
    Raised when an experiment configuration cannot be used.

    This covers unreadable or malformed config files, values rejected by
    validation, and datasets that cannot be resolved. The CLI maps it to
    exit status 1.
    """

    pass


class Settings(BaseSettings):
    """Process settings loaded from SAGERL_* environment variables."""

    # Logging
    log_level: str = Field(default="INFO", description="Root log level")
    log_format: str = Field(
        default="%(asctime)s - %(levelname)s - %(message)s",
        description="logging.basicConfig format string",
    )

    # Execution
    num_workers: int = Field(
        default=1, description="Maximum worker threads used to run bench seeds concurrently"
    )
    bench_precision: Literal["float32", "float64"] = Field(
        default="float32", description="Working precision for bench runs"
    )

    # Output
    output_dir: str = Field(default="runs", description="Default output directory")

    @field_validator("num_workers")
    @classmethod
    def check_num_workers(cls, v: int) -> int:
        """Reject worker caps below one."""
        if v < 1:
            raise ValueError(f"num_workers must be >= 1, got {v}")
        return v

    @field_validator("log_level", mode="before")
    @classmethod
    def normalize_log_level(cls, v: Any) -> Any:
        """Accept lowercase level names from the environment."""
        if isinstance(v, str):
            return v.strip().upper()
        return v

    model_config = SettingsConfigDict(
        env_prefix="SAGERL_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )


# Global settings instance
_settings: Settings | None = None


def get_settings() -> Settings:
    """
    Get the global Settings instance.

    Returns:
        Settings: The process settings

    Raises:
        ValidationError: If environment variables are invalid
    """
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings


def reset_settings() -> None:
    """Drop the cached Settings so the next access re-reads the environment."""
    global _settings
    _settings = None


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    """
    Load and validate an experiment config file.

    The file is a single JSON document; every field has a default, so a file
    naming only the dataset is complete.

    Args:
        path: Path to the JSON config file

    Returns:
        ExperimentConfig: The validated configuration

    Raises:
        ConfigurationError: If the file is missing, is not valid JSON, or fails
            validation
    """
    config_path = Path(path)
    if not config_path.is_file():
        raise ConfigurationError(f"config file not found: {config_path}")

    try:
        raw = json.loads(config_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigurationError(
            f"{config_path}:{e.lineno}: invalid JSON: {e.msg}"
        ) from e

    if not isinstance(raw, dict):
        raise ConfigurationError(f"{config_path}: top level must be a JSON object")

    if "precision" not in raw.get("sage", {}):
        raw.setdefault("sage", {})["precision"] = get_settings().bench_precision

    try:
        config = ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        # Collapse to one line for the CLI diagnostic
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"]) or "<root>"
        raise ConfigurationError(
            f"{config_path}: invalid value at '{location}': {first['msg']}"
        ) from e

    if config.dataset is not None and not Path(config.dataset).is_dir():
        raise ConfigurationError(f"dataset directory not found: {config.dataset}")

    return config
