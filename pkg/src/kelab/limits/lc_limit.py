"""
LC 典範測度

單調極限 dμ_can = lim_{t↑1} dμ_can,t、尖點剖面擬合與 AZD 可積性探測。
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.config import LimitSettings, SolverSettings
from ..core.exceptions import LimitError
from ..core.logging import get_logger
from ..discretization.grid import RadialGrid
from ..geometry.model import LogPair
from ..geometry.weights import Density
from .hyperbolic import effective_chordal_sq
from .sweeps import TSweep, sweep_t

logger = get_logger(__name__)

# 尖點剖面擬合使用的弦距離環帶
CUSP_ANNULUS = (1e-6, 1e-2)

# AZD 探測的切除半徑（弦距離）
PROBE_RADII = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4)


@dataclass(frozen=True)
class CuspFit:
    """
    log ρ = α·log r + β·log(−log r) + γ 的擬合

    slope 為同一環帶上 log ρ 對 log r 的直線斜率。
    """

    point: int
    alpha: float
    beta: float
    gamma: float
    slope: float
    residual: float
    nodes: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "point": self.point,
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "slope": self.slope,
            "residual": self.residual,
            "nodes": self.nodes,
        }


def fit_cusp_profile(
    grid: RadialGrid,
    log_density: np.ndarray,
    index: int,
    annulus: Tuple[float, float] = CUSP_ANNULUS,
) -> CuspFit:
    """
    在標記點附近的環帶上擬合尖點剖面

    Raises:
        LimitError: 環帶內節點不足
    """
    r = np.sqrt(grid.chordal_sq(index))
    inside = (r > annulus[0]) & (r < annulus[1])
    if np.count_nonzero(inside) < 4:
        raise LimitError(
            f"Too few nodes near marked point {index} for a cusp fit "
            f"({np.count_nonzero(inside)})"
        )
    log_r = np.log(r[inside])
    y = np.asarray(log_density)[inside]
    X = np.column_stack([log_r, np.log(-log_r), np.ones_like(log_r)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    residual = float(np.max(np.abs(X @ coef - y)))
    slope = float(np.polyfit(log_r, y, 1)[0])
    return CuspFit(
        point=index,
        alpha=float(coef[0]),
        beta=float(coef[1]),
        gamma=float(coef[2]),
        slope=slope,
        residual=residual,
        nodes=int(np.count_nonzero(inside)),
    )


@dataclass
class ProbeTable:
    """切除積分 I(r) 隨 r ↓ 0 的表與收斂判定"""

    radii: Tuple[float, ...]
    integrals: Dict[int, List[float]]
    increments: Dict[int, List[float]]
    convergent: Dict[int, bool]

    @property
    def all_convergent(self) -> bool:
        return all(self.convergent.values())

    def rows(self) -> List[Dict[str, Any]]:
        out = []
        for order, values in self.integrals.items():
            for radius, value in zip(self.radii, values):
                out.append({"order": order, "radius": radius, "integral": value})
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {
            "radii": list(self.radii),
            "integrals": {str(k): v for k, v in self.integrals.items()},
            "convergent": {str(k): v for k, v in self.convergent.items()},
        }


def azd_integrability_probe(
    grid: RadialGrid,
    log_density: np.ndarray,
    pair: LogPair,
    *,
    m: int = 1,
    vanishing_orders: Sequence[int] = (0,),
    radii: Sequence[float] = PROBE_RADII,
    ratio_threshold: float = 0.5,
) -> ProbeTable:
    """
    ∫ |s|²·(ρ·Π χ_i^{2d_i})^{−m} ω_FS 在切除 LC 點鄰域後的積分

    s 取在每個除子點消失 k 階的截面，|s|² = Π χ_i^{2k}。
    相鄰半徑間的增量以固定比率以下衰減時判定為收斂。

    Args:
        grid: 網格
        log_density: 極限的對數密度
        pair: 對數對
        m: 多重典範的次數
        vanishing_orders: 樣本截面的消失階數
        radii: 遞減的切除半徑
        ratio_threshold: 收斂判定的增量比上限

    Returns:
        ProbeTable: 各階數的積分表與判定
    """
    radii = tuple(sorted((float(r) for r in radii), reverse=True))
    if len(radii) < 3:
        raise LimitError("AZD probe needs at least three excision radii")
    w = grid.weights
    log_pack = np.zeros(grid.size)
    for index, d in pair.divisor.entries:
        log_pack += float(d) * np.log(effective_chordal_sq(grid, index))
    cusps = [i for i, d in pair.divisor.entries if d == 1]
    distance = np.full(grid.size, np.inf)
    for index in cusps:
        distance = np.minimum(distance, np.sqrt(grid.chordal_sq(index)))

    table = ProbeTable(radii, {}, {}, {})
    for order in vanishing_orders:
        log_s = np.zeros(grid.size)
        for index, _ in pair.divisor.entries:
            log_s += order * np.log(effective_chordal_sq(grid, index))
        integrand = w * np.exp(log_s - m * (np.asarray(log_density) + log_pack))
        integrals = [float(np.sum(integrand[distance >= r])) for r in radii]
        increments = [b - a for a, b in zip(integrals[:-1], integrals[1:])]
        ratios = [
            b / a for a, b in zip(increments[:-1], increments[1:]) if a > 0
        ]
        tail = ratios[-3:]
        convergent = not cusps or all(r < ratio_threshold for r in tail)
        table.integrals[order] = integrals
        table.increments[order] = increments
        table.convergent[order] = bool(convergent)
    logger.debug(
        "AZD integrability probe",
        cusps=cusps,
        convergent=table.convergent,
    )
    return table


@dataclass
class LCLimitResult:
    """LC 典範測度的網格近似"""

    pair: LogPair
    sweep: TSweep = field(repr=False)
    log_density: np.ndarray = field(repr=False)
    error_estimate: float
    extrapolated: bool
    cusp_fits: Dict[int, CuspFit] = field(default_factory=dict)
    azd: Optional[ProbeTable] = None

    @property
    def grid(self) -> RadialGrid:
        return self.sweep.grid

    @property
    def density(self) -> Density:
        return Density(np.exp(self.log_density), {})

    @property
    def area(self) -> float:
        return float(np.sum(self.grid.weights * np.exp(self.log_density)))

    def dominates_sweep(self, tolerance: float = 1e-8) -> bool:
        return all(
            bool(np.all(self.log_density >= d - tolerance))
            for d in self.sweep.log_densities
        )

    def compare(
        self, reference_log_density: np.ndarray, mask: Optional[np.ndarray] = None
    ) -> float:
        """與參考密度的最大相對差 max |ρ/ρ_ref − 1|"""
        ratio = np.exp(self.log_density - np.asarray(reference_log_density)) - 1.0
        if mask is not None:
            ratio = ratio[mask]
        return float(np.max(np.abs(ratio)))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "area": self.area,
            "error_estimate": self.error_estimate,
            "extrapolated": self.extrapolated,
            "cusp_fits": {str(k): v.to_dict() for k, v in self.cusp_fits.items()},
            "azd": self.azd.to_dict() if self.azd is not None else None,
            "sweep": self.sweep.to_dict(),
        }


def _aitken(
    x1: np.ndarray, x2: np.ndarray, x3: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """逐節點 Aitken Δ²；比率不在 (0, 1) 的節點保留 x3"""
    d1 = x2 - x1
    d2 = x3 - x2
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = d2 / d1
        accel = x3 + d2 * ratio / (1.0 - ratio)
    usable = np.isfinite(accel) & (ratio > 0) & (ratio < 1) & (d1 > 0)
    return np.where(usable, accel, x3), usable


def lc_limit(
    pair: LogPair,
    t_values: Optional[Sequence[Any]] = None,
    grid: Optional[RadialGrid] = None,
    *,
    sweep: Optional[TSweep] = None,
    settings: Optional[LimitSettings] = None,
    solver_settings: Optional[SolverSettings] = None,
    probe: bool = True,
    n_jobs: int = 1,
) -> LCLimitResult:
    """
    KLT → LC 極限

    逐節點取單調上確界，並以最後三個 t 的 Aitken Δ² 外插尾部；
    外插值不低於最後一個解。LC 點上擬合尖點剖面。

    Args:
        pair: LC（或 KLT）對
        t_values: t 排程
        grid: 網格
        sweep: 已完成的掃描（給定時不再求解）
        settings: 極限配置
        solver_settings: 求解器配置
        probe: 是否執行 AZD 可積性探測
        n_jobs: 掃描的並行工作數

    Returns:
        LCLimitResult: 極限密度與診斷

    Raises:
        MonotonicityError: 掃描非單調
    """
    settings = settings or LimitSettings()
    if sweep is None:
        sweep = sweep_t(
            pair,
            t_values,
            grid,
            settings=settings,
            solver_settings=solver_settings,
            n_jobs=n_jobs,
        )
    sweep.require_monotone()
    logs = np.stack(sweep.log_densities)
    last = logs[-1]
    supremum = np.max(logs, axis=0)

    distinct = len(set(sweep.t_values)) if sweep.t_values else len(logs)
    extrapolated = False
    error = 0.0
    limit = supremum
    if distinct >= 3 and len(logs) >= 3:
        accel, usable = _aitken(logs[-3], logs[-2], last)
        limit = np.maximum(accel, supremum)
        extrapolated = bool(np.any(usable))
        error = float(np.max(limit - last))

    cusp_fits: Dict[int, CuspFit] = {}
    for index, d in pair.divisor.entries:
        if d == 1:
            try:
                cusp_fits[index] = fit_cusp_profile(sweep.grid, limit, index)
            except LimitError as e:
                logger.warning("Cusp fit skipped", point=index, error=str(e))

    azd = azd_integrability_probe(sweep.grid, limit, pair) if probe else None
    result = LCLimitResult(
        pair=pair,
        sweep=sweep,
        log_density=limit,
        error_estimate=error,
        extrapolated=extrapolated,
        cusp_fits=cusp_fits,
        azd=azd,
    )
    logger.info(
        "LC limit assembled",
        members=len(logs),
        error=error,
        cusps=list(cusp_fits),
        azd=azd.all_convergent if azd is not None else None,
    )
    return result
