"""
Monge–Ampère / Liouville 求解器

在球面上 Monge–Ampère 方程化為純量方程

    log((β + L u) / R) = c·u + drift

其中 β 為背景曲率密度，R 為右端體積密度（含標記點冪次）。
本模組提供單次求解、KLT 對的 δ 延拓與幾乎有界常數的報告。
"""

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.config import SolverSettings
from ..core.exceptions import (
    InvalidDivisorError,
    NotBigError,
    PositivityError,
    ScheduleError,
)
from ..core.logging import get_logger
from ..discretization.grid import TWO_PI, GridField, RadialGrid, grid_for_pair
from ..geometry.model import (
    LogPair,
    PairClass,
    QLineBundle,
    derived_cluster_exponent,
)
from ..geometry.weights import Density, MetricWeight
from .newton import LiouvilleNewton, NewtonResult

logger = get_logger(__name__)


@dataclass(frozen=True)
class LiouvilleProblem:
    """
    Liouville 問題資料

    Attributes:
        background_weight: 背景度量（曲率為 β）
        rhs_density: 右端密度 R，冪次 e_i 需 > −1
        exponent_coeff: u 在指數中的係數 c
        drift_offset: 漂移項（Ricci 迭代的 −t·u_{m−1}）
    """

    background_weight: MetricWeight
    rhs_density: Density
    exponent_coeff: float = 1.0
    drift_offset: Optional[GridField] = None

    def __post_init__(self) -> None:
        if self.exponent_coeff <= 0:
            raise ValueError(
                f"Exponent coefficient must be positive, got {self.exponent_coeff}"
            )
        self.rhs_density.check_finite_mass()

    @property
    def degree(self) -> Fraction:
        return self.background_weight.degree

    def require_big(self) -> None:
        if self.degree <= 0:
            raise NotBigError(
                f"Background degree {self.degree} is not positive",
                degree=self.degree,
            )

    def background_density(self, grid: RadialGrid) -> np.ndarray:
        """β 相對於 ω_FS 的密度，極點以 2π·c·δ̃/w 計入"""
        weight = self.background_weight
        density = weight.curvature_density(grid).copy()
        for index, c in weight.pole_coefficients.items():
            for node, share in grid.delta_weights(grid.model.points[index]).items():
                density[node] += TWO_PI * float(c) * share / grid.weights[node]
        return density

    def log_rhs(self, grid: RadialGrid) -> np.ndarray:
        """log R = log smooth + Σ e_i G_i"""
        value = np.log(self.rhs_density.smooth(grid))
        for index, e in self.rhs_density.exponents.items():
            if e != 0.0:
                value = value + e * grid.green(index)
        return value

    def drift(self, grid: RadialGrid) -> np.ndarray:
        if self.drift_offset is None:
            return np.zeros(grid.size)
        grid.require_compatible(self.drift_offset.grid)
        return self.drift_offset.values


@dataclass
class SolveReport:
    """單次求解報告"""

    potential: GridField
    residual_norm: float
    newton_iterations: int
    bounds: Tuple[float, float]
    area: float
    converged: bool
    target_area: float
    log_density: np.ndarray = field(repr=False)
    density: Density = field(repr=False)
    log_residual: float = 0.0
    max_principle_gap: float = 0.0
    conservation_defect: float = 0.0
    delta: Optional[float] = None

    @property
    def grid(self) -> RadialGrid:
        return self.potential.grid

    def row(self) -> Dict[str, Any]:
        """CSV 列：δ, iterations, residual, area, sup u, inf u"""
        return {
            "delta": self.delta if self.delta is not None else 0.0,
            "iterations": self.newton_iterations,
            "residual": self.residual_norm,
            "area": self.area,
            "sup_u": self.bounds[0],
            "inf_u": self.bounds[1],
        }

    def to_dict(self) -> Dict[str, Any]:
        return {
            **self.row(),
            "converged": self.converged,
            "target_area": self.target_area,
            "log_residual": self.log_residual,
            "max_principle_gap": self.max_principle_gap,
            "conservation_defect": self.conservation_defect,
        }


def _report_from_result(
    result: NewtonResult,
    grid: RadialGrid,
    exponents: Dict[int, float],
    delta: Optional[float] = None,
) -> SolveReport:
    u = result.u
    return SolveReport(
        potential=GridField(u, grid),
        residual_norm=result.residual,
        newton_iterations=result.iterations,
        bounds=(float(np.max(u)), float(np.min(u))),
        area=result.area,
        converged=result.converged,
        target_area=result.target_area,
        log_density=result.log_density,
        density=Density.from_log(grid, result.log_density, exponents),
        log_residual=result.log_residual,
        max_principle_gap=result.max_principle_gap,
        conservation_defect=result.conservation_defect,
        delta=delta,
    )


def newton_liouville(
    grid: RadialGrid,
    background: np.ndarray,
    log_rhs: np.ndarray,
    c: float = 1.0,
    drift: Optional[np.ndarray] = None,
    u0: Optional[np.ndarray] = None,
    tol: Optional[float] = None,
    settings: Optional[SolverSettings] = None,
    raise_on_failure: bool = False,
) -> NewtonResult:
    """LiouvilleNewton 的函數入口"""
    return LiouvilleNewton(grid, settings).solve(
        background,
        log_rhs,
        c=c,
        drift=drift,
        u0=u0,
        tol=tol,
        raise_on_failure=raise_on_failure,
    )


def solve_liouville(
    problem: LiouvilleProblem,
    grid: RadialGrid,
    tol: Optional[float] = None,
    *,
    settings: Optional[SolverSettings] = None,
    u0: Optional[np.ndarray] = None,
    raise_on_failure: bool = False,
    delta: Optional[float] = None,
) -> SolveReport:
    """
    求解 log((β + L u)/R) = c·u + drift

    Args:
        problem: 問題資料
        grid: 網格
        tol: 質量加權殘差容許值
        settings: 求解器配置
        u0: 初始猜測
        raise_on_failure: 未收斂時拋出 SolverDivergenceError
        delta: 記錄於報告的擾動參數

    Returns:
        SolveReport: 求解報告；未收斂時 converged=False

    Raises:
        NotBigError: 背景次數 ≤ 0
    """
    problem.require_big()
    result = newton_liouville(
        grid,
        problem.background_density(grid),
        problem.log_rhs(grid),
        c=problem.exponent_coeff,
        drift=problem.drift(grid),
        u0=u0,
        tol=tol,
        settings=settings,
        raise_on_failure=raise_on_failure,
    )
    return _report_from_result(result, grid, problem.rhs_density.exponents, delta)


# ----------------------------------------------------------------------
# δ 延拓
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class PerturbationSchedule:
    """
    δ 延拓排程

    Attributes:
        delta_values: 嚴格遞減的正數列
        epsilon: 軌形勢 Λ 的係數 ε
        E_weight: 輔助除子 E 的度量（None 或無極點時視為空）
    """

    delta_values: Tuple[float, ...]
    epsilon: float = 1e-2
    E_weight: Optional[MetricWeight] = None

    def __post_init__(self) -> None:
        values = tuple(float(d) for d in self.delta_values)
        object.__setattr__(self, "delta_values", values)
        if any(d <= 0 for d in values):
            raise ScheduleError(f"Delta values must be positive: {values}")
        if any(b >= a for a, b in zip(values, values[1:])):
            raise ScheduleError(f"Delta values must be strictly decreasing: {values}")
        if self.epsilon <= 0:
            raise ScheduleError(f"Epsilon must be positive, got {self.epsilon}")

    @classmethod
    def geometric(
        cls,
        start: float = 0.5,
        minimum: float = 1e-4,
        epsilon: float = 1e-2,
        E_weight: Optional[MetricWeight] = None,
    ) -> "PerturbationSchedule":
        """{start·2^{−k}} 直到 minimum"""
        values: List[float] = []
        delta = start
        while delta >= minimum:
            values.append(delta)
            delta *= 0.5
        return cls(tuple(values), epsilon, E_weight)

    @classmethod
    def from_settings(
        cls,
        settings: Optional[SolverSettings] = None,
        E_weight: Optional[MetricWeight] = None,
    ) -> "PerturbationSchedule":
        settings = settings or SolverSettings()
        return cls.geometric(
            settings.delta_start, settings.delta_min, settings.epsilon, E_weight
        )

    @classmethod
    def direct(cls) -> "PerturbationSchedule":
        """空排程：直接求解 δ = 0"""
        return cls(())

    @property
    def has_E(self) -> bool:
        return self.E_weight is not None and bool(self.E_weight.pole_coefficients)


def auxiliary_weight(pair: LogPair) -> Optional[MetricWeight]:
    """E 的度量：在 E 的標記點上帶極點、光滑部分為零（h_E 為 FS 冪）"""
    if not pair.auxiliary.entries:
        return None
    return MetricWeight(
        None,
        pair.auxiliary.as_dict(),
        QLineBundle(pair.auxiliary.degree),
    )


def orbifold_potential(grid: RadialGrid, pair: LogPair, epsilon: float) -> np.ndarray:
    """
    Λ = −ε Σ_i log(1 − (½χ_i²)^{1/b_i})

    b_i 為滿足 d_i < (b−1)/b 的最小整數。
    """
    value = np.zeros(grid.size)
    for index, d in pair.divisor.entries:
        b = derived_cluster_exponent(d)
        if b is None:
            continue
        q = 0.5 * grid.chordal_sq(index)
        value -= epsilon * np.log1p(-(q ** (1.0 / b)))
    return value


def require_klt(pair: LogPair) -> None:
    cls = pair.classification
    if cls == PairClass.LC:
        raise InvalidDivisorError(
            "Pair is log canonical but not KLT; use the KLT to LC limit sweep",
            entry=pair.divisor.to_dict(),
        )
    if cls == PairClass.INVALID:
        raise InvalidDivisorError(
            "Divisor coefficients must lie in (0, 1)", entry=pair.divisor.to_dict()
        )
    if pair.degree <= 0:
        raise NotBigError(
            f"deg(K_X + D) = {pair.degree} is not positive", degree=pair.degree
        )


def canonical_problem(
    pair: LogPair,
    grid: RadialGrid,
    reference: Optional[MetricWeight] = None,
    delta: float = 0.0,
    schedule: Optional[PerturbationSchedule] = None,
) -> LiouvilleProblem:
    """
    KLT 對在擾動參數 δ 下的 Liouville 問題

    背景 β_δ = ω_P − δ·Θ_E + δ·i∂∂̄Λ，右端
    log R = Φ_P − Σ d_i G_i，漂移 δ·(Λ + log‖σ_E‖²)。

    Args:
        pair: KLT 對
        grid: 網格
        reference: h_P 的權重（預設為 FS 冪）
        delta: 擾動參數
        schedule: 提供 ε 與 E

    Returns:
        LiouvilleProblem: 問題資料

    Raises:
        PositivityError: β_δ 在某節點不為正
    """
    reference = reference or MetricWeight(None, {}, pair.log_canonical)
    exponents = {i: -float(d) for i, d in pair.divisor.entries}
    phi_p = reference.smooth(grid)
    rhs = Density(np.exp(phi_p), exponents)

    if delta == 0.0:
        return LiouvilleProblem(reference, rhs)

    schedule = schedule or PerturbationSchedule.direct()
    lam = orbifold_potential(grid, pair, schedule.epsilon)
    E_weight = schedule.E_weight
    smooth = phi_p + delta * lam
    degree = reference.bundle
    drift = delta * lam
    if E_weight is not None:
        smooth = smooth - delta * E_weight.smooth(grid)
        degree = degree + E_weight.bundle.scaled(-Fraction(delta))
        drift = drift + delta * E_weight.section_log_norm(grid)
    background = MetricWeight(smooth, {}, degree)

    density = background.curvature_density(grid)
    if np.min(density) <= 0:
        i_min = int(np.argmin(density))
        raise PositivityError(
            f"Perturbed background is not positive at node {i_min} "
            f"(value {density[i_min]:.3e}, delta={delta:g}, "
            f"epsilon={schedule.epsilon:g})"
        )
    return LiouvilleProblem(background, rhs, 1.0, GridField(drift, grid))


@dataclass
class RichardsonReport:
    """δ → 0 外插與 δ = 0 解的比較"""

    deltas: Tuple[float, float]
    max_deviation: float
    extrapolated: np.ndarray = field(repr=False)

    def to_dict(self) -> Dict[str, Any]:
        return {"deltas": list(self.deltas), "max_deviation": self.max_deviation}


@dataclass
class CanonicalKEResult:
    """solve_canonical_KE_klt 的結果：最終 δ = 0 報告與每個 δ 的軌跡"""

    pair: LogPair
    final: SolveReport
    trace: List[SolveReport]
    schedule: PerturbationSchedule
    richardson: Optional[RichardsonReport] = None

    @property
    def grid(self) -> RadialGrid:
        return self.final.grid

    def at_delta(self, delta: float) -> SolveReport:
        for report in self.trace:
            if report.delta is not None and np.isclose(report.delta, delta):
                return report
        raise KeyError(delta)

    def monotonicity_margin(self, larger: float, smaller: float) -> float:
        """min(log ρ_{smaller} − log ρ_{larger})，應 ≥ −容許值"""
        hi = self.at_delta(larger)
        lo = self.at_delta(smaller)
        return float(np.min(lo.log_density - hi.log_density))

    def rows(self) -> List[Dict[str, Any]]:
        return [report.row() for report in self.trace] + [self.final.row()]


def _richardson(
    trace: Sequence[SolveReport], final: SolveReport
) -> Optional[RichardsonReport]:
    if len(trace) < 2:
        return None
    second, last = trace[-2], trace[-1]
    d1, d0 = float(second.delta or 0.0), float(last.delta or 0.0)
    # 線性外插到 δ = 0；d1 = 2·d0 時為 2ψ(d0) − ψ(d1)
    extrapolated = (d1 * last.log_density - d0 * second.log_density) / (d1 - d0)
    deviation = float(np.max(np.abs(extrapolated - final.log_density)))
    return RichardsonReport((d0, d1), deviation, extrapolated)


def solve_canonical_KE_klt(
    pair: LogPair,
    schedule: Optional[PerturbationSchedule] = None,
    grid: Optional[RadialGrid] = None,
    tol: Optional[float] = None,
    *,
    reference: Optional[MetricWeight] = None,
    settings: Optional[SolverSettings] = None,
    raise_on_failure: bool = False,
) -> CanonicalKEResult:
    """
    KLT 對數一般型對上的典範 Kähler–Einstein 電流

    沿排程求解擾動方程，每個 δ 由前一個解暖啟動，最後求解 δ = 0。

    Args:
        pair: KLT 對
        schedule: δ 排程（None 為預設幾何排程，E 取自 pair.auxiliary）
        grid: 網格（None 時依對的係數建立）
        tol: 殘差容許值
        reference: h_P 權重
        settings: 求解器配置
        raise_on_failure: 任一步未收斂時拋出

    Returns:
        CanonicalKEResult: 最終報告與 δ 軌跡

    Raises:
        InvalidDivisorError: LC 或不合法的對
        NotBigError: deg(K_X + D) ≤ 0
        ScheduleError: 排程非遞減
        PositivityError: 擾動背景不為正
    """
    require_klt(pair)
    settings = settings or SolverSettings()
    if schedule is None:
        schedule = PerturbationSchedule.from_settings(settings, auxiliary_weight(pair))
    if grid is None:
        grid = grid_for_pair(pair)

    trace: List[SolveReport] = []
    u: Optional[np.ndarray] = None
    for delta in schedule.delta_values:
        problem = canonical_problem(pair, grid, reference, delta, schedule)
        report = solve_liouville(
            problem,
            grid,
            tol,
            settings=settings,
            u0=u,
            raise_on_failure=raise_on_failure,
            delta=delta,
        )
        trace.append(report)
        u = report.potential.values
        logger.debug(
            "Perturbed solve finished",
            delta=delta,
            iterations=report.newton_iterations,
            residual=report.residual_norm,
        )

    final = solve_liouville(
        canonical_problem(pair, grid, reference, 0.0, schedule),
        grid,
        tol,
        settings=settings,
        u0=u,
        raise_on_failure=raise_on_failure,
        delta=0.0,
    )
    result = CanonicalKEResult(pair, final, trace, schedule, _richardson(trace, final))
    logger.info(
        "Canonical KE solve finished",
        degree=str(pair.degree),
        deltas=len(trace),
        residual=final.residual_norm,
        area=final.area,
        converged=final.converged,
    )
    return result


# ----------------------------------------------------------------------
# 幾乎有界性
# ----------------------------------------------------------------------


@dataclass
class AlmostBoundedness:
    """u ≤ C₊ 與 u ≥ C₋(δ₀) + δ₀·log‖σ_E‖² 的最緊常數"""

    c_plus: float
    c_minus: Dict[float, float]
    verified: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "c_plus": self.c_plus,
            "c_minus": {repr(k): v for k, v in self.c_minus.items()},
            "verified": self.verified,
        }


def almost_boundedness_report(
    report: SolveReport,
    E_weight: Optional[MetricWeight],
    deltas0: Sequence[float],
) -> AlmostBoundedness:
    """
    幾乎有界常數

    Args:
        report: 已收斂的求解報告
        E_weight: E 的度量（None 為空）
        deltas0: δ₀ 列表

    Returns:
        AlmostBoundedness: C₊ 與每個 δ₀ 的 C₋
    """
    grid = report.grid
    u = report.potential.values
    log_sigma = (
        np.zeros(grid.size) if E_weight is None else E_weight.section_log_norm(grid)
    )
    c_plus = float(np.max(u))
    c_minus: Dict[float, float] = {}
    verified = True
    for delta0 in deltas0:
        lower = u - float(delta0) * log_sigma
        c = float(np.min(lower))
        c_minus[float(delta0)] = c
        slack = 1e-12 * (1.0 + abs(c))
        verified &= bool(np.all(u >= c + float(delta0) * log_sigma - slack))
    return AlmostBoundedness(c_plus, c_minus, verified)
