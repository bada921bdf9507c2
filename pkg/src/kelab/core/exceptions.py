"""
例外階層模組

所有數值運算、幾何建構與實驗框架錯誤的共同根類別。
"""

from typing import Any, Optional


class KelabError(Exception):
    """kelab 所有錯誤的基礎類別"""

    pass


# ---------------------------------------------------------------------------
# 幾何
# ---------------------------------------------------------------------------


class GeometryError(KelabError):
    """幾何模型錯誤"""

    pass


class InvalidDivisorError(GeometryError):
    """除子係數不合法（>1 或 ≤0）或參照了不存在的標記點"""

    def __init__(self, message: str, entry: Optional[Any] = None):
        super().__init__(message)
        self.entry = entry


class NotBigError(GeometryError):
    """對數典範類次數 ≤ 0，求解器拒絕此輸入"""

    def __init__(self, message: str, degree: Optional[Any] = None):
        super().__init__(message)
        self.degree = degree


# ---------------------------------------------------------------------------
# 離散化
# ---------------------------------------------------------------------------


class DiscretizationError(KelabError):
    """離散化錯誤"""

    pass


class ResolutionError(DiscretizationError):
    """網格解析度不足"""

    pass


class GridMismatchError(DiscretizationError):
    """網格函數與網格不相符"""

    pass


class InfiniteMassError(DiscretizationError):
    """密度指數 ≤ −1，總質量發散"""

    def __init__(
        self,
        message: str,
        exponent: Optional[float] = None,
        point: Optional[int] = None,
    ):
        super().__init__(message)
        self.exponent = exponent
        self.point = point


# ---------------------------------------------------------------------------
# 求解器
# ---------------------------------------------------------------------------


class SolverError(KelabError):
    """求解器錯誤"""

    pass


class SolverDivergenceError(SolverError):
    """Newton 迭代未收斂"""

    def __init__(self, message: str, residual: Optional[float] = None):
        super().__init__(message)
        self.residual = residual


class ScheduleError(SolverError):
    """δ 排程不合法"""

    pass


class PositivityError(SolverError):
    """擾動後的背景曲率不為正"""

    pass


# ---------------------------------------------------------------------------
# Ricci 迭代
# ---------------------------------------------------------------------------


class IterationError(KelabError):
    """Ricci 迭代錯誤"""

    pass


class TraceTooShortError(IterationError):
    """迭代軌跡長度不足以估計收縮比"""

    pass


class ClassMismatchError(IterationError):
    """兩個參考權重不屬於同一上同調類"""

    pass


# ---------------------------------------------------------------------------
# Bergman 動力系統
# ---------------------------------------------------------------------------


class BergmanError(KelabError):
    """Bergman 核計算錯誤"""

    pass


class NonIntegrableWeightError(BergmanError):
    """權重在某個極點不可積"""

    def __init__(
        self,
        message: str,
        point: Optional[int] = None,
        exponent: Optional[float] = None,
    ):
        super().__init__(message)
        self.point = point
        self.exponent = exponent


class DegreeBookkeepingError(BergmanError):
    """線叢次數記帳不一致"""

    pass


# ---------------------------------------------------------------------------
# KLT → LC 極限
# ---------------------------------------------------------------------------


class LimitError(KelabError):
    """KLT → LC 極限錯誤"""

    pass


class AdmissibilityError(LimitError):
    """t 超出允許區間"""

    def __init__(self, message: str, epsilon0: Optional[float] = None):
        super().__init__(message)
        self.epsilon0 = epsilon0


class MonotonicityError(LimitError):
    """t 掃描的單調性被違反"""

    def __init__(
        self,
        message: str,
        margin: Optional[float] = None,
        member: Optional[int] = None,
    ):
        super().__init__(message)
        self.margin = margin
        self.member = member


# ---------------------------------------------------------------------------
# 實驗框架
# ---------------------------------------------------------------------------


class HarnessError(KelabError):
    """實驗框架錯誤"""

    pass


class ConfigValidationError(HarnessError):
    """實驗配置驗證失敗"""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


class IntegrityError(HarnessError):
    """輸出檔案內容雜湊不符"""

    pass
