"""
標記球面模型

Riemann 球面上帶權標記點的幾何資料：標記點、對數除子、Q 線叢與
Zariski 分解，以及對數對的 KLT/LC 分類。
"""

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from math import floor, gcd
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from ..core.exceptions import InvalidDivisorError, NotBigError
from ..core.logging import get_logger

logger = get_logger(__name__)

RationalLike = Union[Fraction, int, str]

# 球面上的典範線叢次數
CANONICAL_DEGREE = Fraction(-2)


def as_fraction(value: RationalLike) -> Fraction:
    """將整數、字串或 Fraction 轉為精確有理數（拒絕浮點數）"""
    if isinstance(value, bool):
        raise TypeError("Boolean is not a rational coefficient")
    if isinstance(value, float):
        raise TypeError(
            f"Coefficients must be exact rationals, got float {value!r}; "
            "use a string such as '5/6'"
        )
    return Fraction(value)


class PairClass(str, Enum):
    """對數對分類"""

    KLT = "klt"  # 所有係數落在 (0,1)
    LC = "lc-not-klt"  # 所有係數落在 (0,1]，至少一個等於 1
    INVALID = "invalid"  # 有係數 > 1 或 ≤ 0


class PointKind(str, Enum):
    """標記點在兩圖冊中的位置"""

    ZERO = "zero"  # 標準圖的原點
    INFINITY = "infinity"  # 無窮遠點（僅在帽圖中）
    AFFINE = "affine"  # 其餘點


@dataclass(frozen=True)
class MarkedSphereModel:
    """
    Riemann 球面與其標記點

    標記點以標準圖 z 的仿射座標給出，None 代表無窮遠點；
    兩圖之間的轉換為 z → 1/z。
    """

    points: Tuple[Optional[complex], ...]
    chart_convention: str = "z->1/z"

    def __post_init__(self) -> None:
        normalized: List[Optional[complex]] = []
        for p in self.points:
            if p is None:
                normalized.append(None)
                continue
            c = complex(p)
            if not (np.isfinite(c.real) and np.isfinite(c.imag)):
                raise InvalidDivisorError(
                    f"Marked point {p!r} is not representable in the standard chart; "
                    "use None for the point at infinity",
                    entry=p,
                )
            normalized.append(c)
        object.__setattr__(self, "points", tuple(normalized))

        seen: List[Optional[complex]] = []
        for p in self.points:
            if p in seen:
                raise InvalidDivisorError(
                    f"Marked points must be distinct: {p!r}", entry=p
                )
            seen.append(p)

    @classmethod
    def from_config(cls, entries: Sequence[Any]) -> "MarkedSphereModel":
        """由配置格式建立模型：[re, im]、數字或 "inf" """
        points: List[Optional[complex]] = []
        for entry in entries:
            if isinstance(entry, str):
                if entry.strip().lower() in ("inf", "infinity", "∞"):
                    points.append(None)
                else:
                    points.append(complex(entry.replace(" ", "")))
            elif isinstance(entry, (list, tuple)):
                re_part, im_part = entry
                points.append(complex(float(re_part), float(im_part)))
            else:
                points.append(complex(entry))
        return cls(tuple(points))

    @property
    def size(self) -> int:
        return len(self.points)

    def kind(self, index: int) -> PointKind:
        """標記點類型"""
        p = self.points[index]
        if p is None:
            return PointKind.INFINITY
        if p == 0:
            return PointKind.ZERO
        return PointKind.AFFINE

    @property
    def zero_index(self) -> Optional[int]:
        for i in range(self.size):
            if self.kind(i) == PointKind.ZERO:
                return i
        return None

    @property
    def infinity_index(self) -> Optional[int]:
        for i in range(self.size):
            if self.kind(i) == PointKind.INFINITY:
                return i
        return None

    def affine_indices(self) -> List[int]:
        return [i for i in range(self.size) if self.kind(i) == PointKind.AFFINE]

    def label(self, index: int) -> str:
        p = self.points[index]
        if p is None:
            return "inf"
        if p.imag == 0:
            return f"{p.real:g}"
        return f"{p.real:g}{p.imag:+g}i"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "points": [
                "inf" if p is None else [p.real, p.imag] for p in self.points
            ],
            "chart_convention": self.chart_convention,
        }


def chordal_sq(
    s: np.ndarray, phi: np.ndarray, point: Optional[complex]
) -> np.ndarray:
    """
    弦距離平方 χ(z,p)² = |z−p|² / ((1+|z|²)(1+|p|²))

    z = exp(s + iφ)；s = −∞ 與 s = +∞ 分別代表 0 與 ∞。

    Args:
        s: 對數半徑
        phi: 角度
        point: 標記點（None 為無窮遠點）

    Returns:
        np.ndarray: 每個節點的 χ²，值域 [0, 1]
    """
    s = np.asarray(s, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if point is None:
        return np.asarray(expit(-2.0 * s))
    if point == 0:
        return np.asarray(expit(2.0 * s))

    p = complex(point)
    p_norm = 1.0 + abs(p) ** 2
    out = np.empty_like(s)
    at_inf = np.isposinf(s)
    finite = ~at_inf
    sf = s[finite]
    z = np.exp(sf) * np.exp(1j * phi[finite])
    small = sf <= 0.0
    num = np.abs(z - p) ** 2
    vals = np.empty_like(sf)
    vals[small] = num[small] / ((1.0 + np.abs(z[small]) ** 2) * p_norm)
    # 大 |z| 用 ζ = 1/z 改寫避免上溢
    zeta = np.exp(-sf[~small]) * np.exp(-1j * phi[finite][~small])
    vals[~small] = np.abs(1.0 - p * zeta) ** 2 / ((1.0 + np.abs(zeta) ** 2) * p_norm)
    out[finite] = vals
    out[at_inf] = 1.0 / p_norm
    return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class QLineBundle:
    """
    Q 線叢，以有理次數記錄

    Attributes:
        degree: 次數
        denominator: 使 a·degree 為整數的最小正整數 a（由除子資料決定時可更大）
    """

    degree: Fraction
    denominator: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "degree", as_fraction(self.degree))
        if self.denominator < 1:
            raise ValueError("Denominator must be a positive integer")
        minimal = self.degree.denominator
        if self.denominator % minimal != 0:
            object.__setattr__(
                self, "denominator", _lcm(self.denominator, minimal)
            )

    @classmethod
    def canonical(cls) -> "QLineBundle":
        """球面的典範線叢 K_X，次數 −2"""
        return cls(CANONICAL_DEGREE)

    def __add__(self, other: "QLineBundle") -> "QLineBundle":
        return QLineBundle(
            self.degree + other.degree, _lcm(self.denominator, other.denominator)
        )

    def scaled(self, factor: RationalLike) -> "QLineBundle":
        f = as_fraction(factor)
        return QLineBundle(self.degree * f)

    @property
    def is_genuine(self) -> bool:
        """是否為真正的線叢（整數次數）"""
        return self.degree.denominator == 1


def _lcm(a: int, b: int) -> int:
    return a * b // gcd(a, b)


@dataclass(frozen=True)
class LogDivisor:
    """
    對數除子 D = Σ d_i p_i

    係數為 0 的項在建構時移除。分類在建構時計算但不拋錯，
    由 classify_pair 負責拒絕不合法除子。
    """

    entries: Tuple[Tuple[int, Fraction], ...]

    def __post_init__(self) -> None:
        cleaned: List[Tuple[int, Fraction]] = []
        seen = set()
        for index, coeff in self.entries:
            c = as_fraction(coeff)
            if int(index) in seen:
                raise InvalidDivisorError(
                    f"Marked point {index} appears twice in the divisor",
                    entry=(index, coeff),
                )
            seen.add(int(index))
            if c == 0:
                continue
            cleaned.append((int(index), c))
        object.__setattr__(self, "entries", tuple(sorted(cleaned)))

    @classmethod
    def from_mapping(cls, coefficients: Dict[int, RationalLike]) -> "LogDivisor":
        return cls(tuple((i, as_fraction(c)) for i, c in coefficients.items()))

    @classmethod
    def uniform(cls, indices: Iterable[int], coefficient: RationalLike) -> "LogDivisor":
        c = as_fraction(coefficient)
        return cls(tuple((i, c) for i in indices))

    @property
    def classification(self) -> PairClass:
        coeffs = [c for _, c in self.entries]
        if any(c <= 0 or c > 1 for c in coeffs):
            return PairClass.INVALID
        if any(c == 1 for c in coeffs):
            return PairClass.LC
        return PairClass.KLT

    @property
    def degree(self) -> Fraction:
        return sum((c for _, c in self.entries), Fraction(0))

    @property
    def denominator(self) -> int:
        """使 a·D 為整係數除子的最小正整數 a"""
        a = 1
        for _, c in self.entries:
            a = _lcm(a, c.denominator)
        return a

    @property
    def indices(self) -> List[int]:
        return [i for i, _ in self.entries]

    def coefficient_at(self, index: int) -> Fraction:
        for i, c in self.entries:
            if i == index:
                return c
        return Fraction(0)

    def as_dict(self) -> Dict[int, Fraction]:
        return dict(self.entries)

    def scaled(self, t: RationalLike) -> "LogDivisor":
        """t·D"""
        factor = as_fraction(t)
        return LogDivisor(tuple((i, c * factor) for i, c in self.entries))

    def cluster_exponents(self) -> Dict[int, Optional[int]]:
        """
        每個標記點的叢集指數 b：滿足 d < (b−1)/b 的最小整數

        係數 ≥ 1 時不存在這樣的 b，回傳 None。
        """
        result: Dict[int, Optional[int]] = {}
        for i, c in self.entries:
            result[i] = derived_cluster_exponent(c)
        return result

    def to_dict(self) -> Dict[str, str]:
        return {str(i): str(c) for i, c in self.entries}


def derived_cluster_exponent(coefficient: RationalLike) -> Optional[int]:
    """d < (b−1)/b ⇔ b > 1/(1−d)"""
    d = as_fraction(coefficient)
    if d >= 1:
        return None
    if d <= 0:
        return 1
    return floor(1 / (1 - d)) + 1


@dataclass(frozen=True)
class LogPair:
    """對數對 (X, D)，可附帶輔助除子 E"""

    model: MarkedSphereModel
    divisor: LogDivisor
    auxiliary: LogDivisor = field(default_factory=lambda: LogDivisor(()))

    def __post_init__(self) -> None:
        for index, coeff in self.divisor.entries + self.auxiliary.entries:
            if not 0 <= index < self.model.size:
                raise InvalidDivisorError(
                    f"Divisor entry references unknown marked point {index}",
                    entry=(index, str(coeff)),
                )

    @property
    def log_canonical(self) -> QLineBundle:
        """K_X + D"""
        return QLineBundle(CANONICAL_DEGREE + self.divisor.degree, self.a)

    @property
    def degree(self) -> Fraction:
        return CANONICAL_DEGREE + self.divisor.degree

    @property
    def a(self) -> int:
        return self.divisor.denominator

    @property
    def classification(self) -> PairClass:
        return self.divisor.classification

    def scaled(self, t: RationalLike) -> "LogPair":
        return LogPair(self.model, self.divisor.scaled(t), self.auxiliary)

    def with_model(self, model: MarkedSphereModel) -> "LogPair":
        return LogPair(model, self.divisor, self.auxiliary)

    def coefficient_array(self) -> Dict[int, float]:
        return {i: float(c) for i, c in self.divisor.entries}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "model": self.model.to_dict(),
            "divisor": self.divisor.to_dict(),
            "auxiliary": self.auxiliary.to_dict(),
            "degree": str(self.degree),
        }


@dataclass(frozen=True)
class PairReport:
    """classify_pair 的結果"""

    classification: PairClass
    degree: Fraction
    log_general_type: bool
    denominator: int
    cluster_exponents: Dict[int, Optional[int]]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "classification": self.classification.value,
            "degree": str(self.degree),
            "log_general_type": self.log_general_type,
            "denominator": self.denominator,
            "cluster_exponents": {str(k): v for k, v in self.cluster_exponents.items()},
        }


def classify_pair(model: MarkedSphereModel, divisor: LogDivisor) -> PairReport:
    """
    分類對數對並計算 deg(K_X + D)

    Args:
        model: 標記球面
        divisor: 對數除子

    Returns:
        PairReport: 分類、次數與是否為對數一般型

    Raises:
        InvalidDivisorError: 係數 > 1 或 ≤ 0，或參照不存在的標記點
    """
    for index, coeff in divisor.entries:
        if not 0 <= index < model.size:
            raise InvalidDivisorError(
                f"Divisor entry references unknown marked point {index}",
                entry=(index, str(coeff)),
            )
        if coeff <= 0 or coeff > 1:
            raise InvalidDivisorError(
                f"Invalid coefficient {coeff} at marked point {index}: "
                "coefficients must lie in (0, 1]",
                entry=(index, str(coeff)),
            )

    degree = CANONICAL_DEGREE + divisor.degree
    report = PairReport(
        classification=divisor.classification,
        degree=degree,
        log_general_type=degree > 0,
        denominator=divisor.denominator,
        cluster_exponents=divisor.cluster_exponents(),
    )
    logger.debug(
        "Pair classified",
        classification=report.classification.value,
        degree=str(degree),
    )
    return report


@dataclass(frozen=True)
class ZariskiData:
    """
    Zariski 分解 K_X + D = P + N

    曲線上次數為正時 N 為空；次數 ≤ 0 時 is_big 為 False。
    """

    p_degree: Fraction
    n_entries: Tuple[Tuple[int, Fraction], ...] = ()
    is_big: bool = True
    message: str = ""

    @property
    def n_degree(self) -> Fraction:
        return sum((c for _, c in self.n_entries), Fraction(0))

    def require_big(self) -> None:
        """求解器入口使用：非大的類別直接拒絕"""
        if not self.is_big:
            raise NotBigError(self.message, degree=self.p_degree + self.n_degree)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "p_degree": str(self.p_degree),
            "n_entries": [[i, str(c)] for i, c in self.n_entries],
            "is_big": self.is_big,
            "message": self.message,
        }


def zariski_decompose(pair: LogPair) -> ZariskiData:
    """
    對數典範類的 Zariski 分解

    Args:
        pair: 對數對

    Returns:
        ZariskiData: 曲線上 P = K_X + D、N = ∅；次數 ≤ 0 時為非大報告
    """
    degree = pair.degree
    if degree > 0:
        return ZariskiData(p_degree=degree)
    return ZariskiData(
        p_degree=degree,
        is_big=False,
        message=f"deg(K_X + D) = {degree} is not positive; the pair is not of "
        "log general type",
    )
