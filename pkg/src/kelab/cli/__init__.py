"""
kelab - CLI 模組

命令行工具的實作。
"""

from .main import main

__all__ = ["main"]
