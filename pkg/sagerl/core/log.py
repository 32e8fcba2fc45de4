"""
Logging setup for sagerl entry points.
"""

import logging

from sagerl.core.config import get_settings

DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def configure_logging(level: str | None = None) -> None:
    """
    Configure root logging once for a CLI invocation.

    Args:
        level: Log level name; defaults to SAGERL_LOG_LEVEL
    """
    settings = get_settings()
    logging.basicConfig(
        level=(level or settings.log_level).upper(),
        format=settings.log_format,
        datefmt=DATE_FORMAT,
        force=True,
    )
