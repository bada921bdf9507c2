"""
kelab - 核心模組

配置管理、結構化日誌與例外階層。
"""

from .config import Settings, get_settings
from .logging import get_logger, setup_logging

__all__ = [
    "Settings",
    "get_settings",
    "get_logger",
    "setup_logging",
]
