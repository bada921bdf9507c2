"""
度量權重與密度

MetricWeight 以相對於 Fubini–Study 冪次的勢函數記錄奇異 hermitian 度量，
Density 以相對於 ω_FS 的光滑部分加上標記點冪次記錄體積形式。
兩者的網格運算都委派給 RadialGrid。
"""

from dataclasses import dataclass, field
from fractions import Fraction
from typing import TYPE_CHECKING, Any, Dict, Optional, Tuple

import numpy as np

from ..core.exceptions import DiscretizationError, InfiniteMassError
from .model import LogPair, QLineBundle, as_fraction

if TYPE_CHECKING:
    from ..discretization.grid import RadialGrid

# ω_FS 的總面積
REFERENCE_AREA = 2.0 * np.pi


@dataclass(frozen=True)
class MetricWeight:
    """
    奇異 hermitian 度量 h = e^{−φ}·h_FS^{deg}

    φ = smooth_part + Σ c_i·log χ_i²，其中 log χ_i² 以離散 Green 函數實現。
    曲率 Θ_h = deg·ω_FS + i∂∂̄φ = (deg − Σc + L smooth)·ω_FS + 2πΣ c_i [p_i]。

    Attributes:
        smooth_part: 網格上的光滑勢（None 代表零）
        pole_coefficients: 標記點索引 → 對數極點係數
        bundle: 所度量的 Q 線叢
    """

    smooth_part: Optional[np.ndarray]
    pole_coefficients: Dict[int, Fraction] = field(default_factory=dict)
    bundle: QLineBundle = field(default_factory=lambda: QLineBundle(Fraction(0)))

    def __post_init__(self) -> None:
        if self.smooth_part is not None:
            values = np.asarray(self.smooth_part, dtype=float)
            if not np.all(np.isfinite(values)):
                raise DiscretizationError("MetricWeight smooth part must be finite")
            object.__setattr__(self, "smooth_part", values)
        object.__setattr__(
            self,
            "pole_coefficients",
            {int(k): as_fraction(v) for k, v in self.pole_coefficients.items()},
        )

    @property
    def degree(self) -> Fraction:
        return self.bundle.degree

    @property
    def pole_mass(self) -> Fraction:
        return sum(self.pole_coefficients.values(), Fraction(0))

    def smooth(self, grid: "RadialGrid") -> np.ndarray:
        if self.smooth_part is None:
            return np.zeros(grid.size)
        grid.check_values(self.smooth_part)
        return np.asarray(self.smooth_part)

    def potential(self, grid: "RadialGrid") -> np.ndarray:
        """全域權重 φ = smooth + Σ c_i G_i"""
        phi = self.smooth(grid).copy()
        for index, c in self.pole_coefficients.items():
            phi += float(c) * grid.green(index)
        return phi

    def section_log_norm(self, grid: "RadialGrid") -> np.ndarray:
        """
        log‖σ‖²：以光滑度量 e^{−smooth}·h_FS 量測除子 Σc_i p_i 的典範截面

        用於輔助除子 E 的 log‖σ_E‖²_{h_E}。
        """
        value = -self.smooth(grid)
        for index, c in self.pole_coefficients.items():
            value = value + float(c) * grid.green(index)
        return value

    def curvature_density(self, grid: "RadialGrid") -> np.ndarray:
        """曲率的絕對連續部分相對於 ω_FS 的密度"""
        return (
            float(self.degree)
            - float(self.pole_mass)
            + grid.laplacian_values(self.smooth(grid))
        )

    def scaled(self, factor: Any) -> "MetricWeight":
        f = as_fraction(factor)
        return MetricWeight(
            None if self.smooth_part is None else float(f) * self.smooth_part,
            {k: v * f for k, v in self.pole_coefficients.items()},
            self.bundle.scaled(f),
        )

    def __add__(self, other: "MetricWeight") -> "MetricWeight":
        if self.smooth_part is None:
            smooth = other.smooth_part
        elif other.smooth_part is None:
            smooth = self.smooth_part
        else:
            smooth = self.smooth_part + other.smooth_part
        poles = dict(self.pole_coefficients)
        for k, v in other.pole_coefficients.items():
            poles[k] = poles.get(k, Fraction(0)) + v
        return MetricWeight(smooth, poles, self.bundle + other.bundle)


@dataclass(frozen=True)
class Density:
    """
    相對於 ω_FS 的體積密度 ρ = smooth·Π χ_i^{2e_i}

    Attributes:
        smooth_part: 正的網格函數（None 代表 1）
        exponents: 標記點索引 → 冪次 e_i；質量有限需 e_i > −1
    """

    smooth_part: Optional[np.ndarray]
    exponents: Dict[int, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "exponents", {int(k): float(v) for k, v in self.exponents.items()}
        )
        self.check_finite_mass()
        if self.smooth_part is not None:
            values = np.asarray(self.smooth_part, dtype=float)
            if not np.all(np.isfinite(values)) or np.any(values <= 0):
                raise DiscretizationError(
                    "Density smooth part must be finite and strictly positive"
                )
            object.__setattr__(self, "smooth_part", values)

    def check_finite_mass(self) -> None:
        for index, e in self.exponents.items():
            if e <= -1.0:
                raise InfiniteMassError(
                    f"Exponent {e:g} at marked point {index} gives infinite mass",
                    exponent=e,
                    point=index,
                )

    def smooth(self, grid: "RadialGrid") -> np.ndarray:
        if self.smooth_part is None:
            return np.ones(grid.size)
        grid.check_values(self.smooth_part)
        return np.asarray(self.smooth_part)

    def nodal(self, grid: "RadialGrid") -> np.ndarray:
        """每個節點胞的平均密度（奇異因子以胞平均計）"""
        return self.smooth(grid) * grid.singular_factor(self.exponents)

    def log_nodal(self, grid: "RadialGrid") -> np.ndarray:
        return np.log(self.nodal(grid))

    def mass(self, grid: "RadialGrid") -> np.ndarray:
        """每個節點胞的質量"""
        return grid.weights * self.nodal(grid)

    @classmethod
    def from_nodal(
        cls, grid: "RadialGrid", nodal: np.ndarray, exponents: Dict[int, float]
    ) -> "Density":
        """由胞平均密度與宣告的冪次重建 Density"""
        factor = grid.singular_factor(exponents)
        return cls(np.asarray(nodal) / factor, dict(exponents))

    @classmethod
    def from_log(
        cls, grid: "RadialGrid", log_nodal: np.ndarray, exponents: Dict[int, float]
    ) -> "Density":
        return cls.from_nodal(grid, np.exp(log_nodal), exponents)


def reference_metric(
    pair_or_degree: Any = 1,
) -> Tuple[MetricWeight, Density]:
    """
    Fubini–Study 參考度量

    度數 d 的權重為 h_FS^d（勢為零），面積形式 ω_FS = i∂∂̄ log(1+|z|²)，
    總面積 2π；曲率積分為 2π·d。

    Args:
        pair_or_degree: 度數，或對數對（取 deg(K_X + D)）

    Returns:
        Tuple[MetricWeight, Density]: 權重與面積密度
    """
    if isinstance(pair_or_degree, LogPair):
        bundle = pair_or_degree.log_canonical
    elif isinstance(pair_or_degree, QLineBundle):
        bundle = pair_or_degree
    else:
        bundle = QLineBundle(as_fraction(pair_or_degree))
    return MetricWeight(None, {}, bundle), Density(None, {})


def curvature_integral(weight: MetricWeight, grid: "RadialGrid") -> float:
    """
    ∫ Θ_h = ∫ (deg − Σc + L smooth) ω_FS + 2π Σc

    Args:
        weight: 度量權重
        grid: 網格

    Returns:
        float: 曲率積分，應等於 2π·deg
    """
    regular = float(np.sum(grid.weights * weight.curvature_density(grid)))
    return regular + 2.0 * np.pi * float(weight.pole_mass)
