"""
kelab - 對數對上典範 Kähler–Einstein 電流的數值實驗室

在帶權標記點的黎曼球面上，以直接 Monge–Ampère 延拓、Ricci 迭代與
Bergman 核動力系統三種方式構造典範電流並互相驗證。
"""

__version__ = "0.1.0"
__author__ = "kelab Team"
__description__ = "對數對上典範 Kähler–Einstein 電流的數值實驗室"

from .core.config import get_settings

__all__ = [
    "__version__",
    "__author__",
    "__description__",
    "get_settings",
]
