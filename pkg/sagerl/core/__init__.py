"""
Core configuration and utilities for sagerl.
"""

from sagerl.core.config import ConfigurationError, Settings, get_settings

__all__ = ["ConfigurationError", "Settings", "get_settings"]
