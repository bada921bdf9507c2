"""
離散算子與求積

laplacian、integrate、extrema 與測度慣例換算。
"""

from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Union

import numpy as np

from ..core.exceptions import GridMismatchError
from ..geometry.weights import Density
from .grid import GridField, RadialGrid

# 面積形式 (i/2) dz∧dz̄ 與 i dt∧dt̄ 之間的換算：i dt∧dt̄ = 2 dA
HOLOMORPHIC_MEASURE_FACTOR = 2.0

_GAUSS_ORDER = 6


@dataclass(frozen=True)
class Extrema:
    """極值與其節點"""

    sup: float
    inf: float
    argmax: int
    argmin: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "sup": self.sup,
            "inf": self.inf,
            "argmax": self.argmax,
            "argmin": self.argmin,
        }


def laplacian(grid: RadialGrid, field: GridField) -> GridField:
    """
    相對於 ω_FS 的 Laplacian：i∂∂̄u = (L u)·ω_FS

    Args:
        grid: 網格
        field: 網格函數

    Returns:
        GridField: L u

    Raises:
        GridMismatchError: 網格不相符
    """
    if not isinstance(field, GridField):
        raise GridMismatchError("laplacian expects a GridField")
    grid.require_compatible(field.grid)
    return GridField(grid.laplacian_values(field.values), grid)


def integrate(
    grid: RadialGrid,
    density: Union[Density, GridField, np.ndarray],
    region: Optional[np.ndarray] = None,
) -> float:
    """
    對 ω_FS 積分

    Density 的奇異因子以胞平均計入；GridField 以節點值乘胞質量。

    Args:
        grid: 網格
        density: Density、GridField 或節點陣列
        region: 布林遮罩（None 為全球面）

    Returns:
        float: 積分值

    Raises:
        InfiniteMassError: 密度冪次 ≤ −1
    """
    if isinstance(density, Density):
        density.check_finite_mass()
        mass = density.mass(grid)
    elif isinstance(density, GridField):
        grid.require_compatible(density.grid)
        mass = grid.weights * density.values
    else:
        values = np.asarray(density, dtype=float)
        grid.check_values(values)
        mass = grid.weights * values
    if region is not None:
        mass = np.where(region, mass, 0.0)
    return float(np.sum(mass))


def extrema(
    field: Union[GridField, np.ndarray], mask: Optional[np.ndarray] = None
) -> Extrema:
    """
    節點上的精確 sup/inf 與位置

    Args:
        field: 網格函數
        mask: 僅考慮遮罩為 True 的節點

    Returns:
        Extrema: (sup, inf, argmax, argmin)
    """
    values = field.values if isinstance(field, GridField) else np.asarray(field)
    if mask is None:
        idx = np.arange(values.size)
    else:
        idx = np.flatnonzero(mask)
    sub = values[idx]
    i_max = int(idx[int(np.argmax(sub))])
    i_min = int(idx[int(np.argmin(sub))])
    return Extrema(float(values[i_max]), float(values[i_min]), i_max, i_min)


def disk_integral(
    grid: RadialGrid,
    profile: Callable[[np.ndarray], np.ndarray],
    radius: float = 1.0,
    convention: str = "area",
) -> float:
    """
    ∫_{|z|<R} f(|z|) 的逐胞 Gauss–Legendre 求積

    convention="area" 使用 dA = (i/2) dz∧dz̄；"holomorphic" 使用 i dz∧dz̄。

    Args:
        grid: 網格（使用其徑向面作為子區間）
        profile: 徑向函數 f(r)
        radius: 圓盤半徑
        convention: 測度慣例

    Returns:
        float: 積分值
    """
    if convention not in ("area", "holomorphic"):
        raise ValueError(f"Unknown measure convention '{convention}'")
    nodes, gauss_w = np.polynomial.legendre.leggauss(_GAUSS_ORDER)
    s_max = float(np.log(radius))

    faces = grid.s_faces[grid.s_faces < s_max]
    breaks = np.append(faces, s_max)

    total = 0.0
    # 極帽：在 r 上積分
    r_cap = float(np.exp(breaks[0]))
    r = 0.5 * r_cap * (nodes + 1.0)
    total += 0.5 * r_cap * float(np.sum(gauss_w * profile(r) * r))
    # 環：dA = r² ds dφ
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        s = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
        rr = np.exp(s)
        total += 0.5 * (hi - lo) * float(np.sum(gauss_w * profile(rr) * rr**2))

    total *= 2.0 * np.pi
    if convention == "holomorphic":
        total *= HOLOMORPHIC_MEASURE_FACTOR
    return total


def area_to_reference(grid: RadialGrid) -> np.ndarray:
    """dA/ω_FS = (1+|z|²)²/2 = 1/(2V²)（∞ 極帽以 0 表示）"""
    out = np.zeros(grid.size)
    finite = grid.V > 0
    out[finite] = 0.5 / grid.V[finite] ** 2
    return out
