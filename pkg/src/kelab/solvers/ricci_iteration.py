"""
Ricci 迭代

雙參數 Ricci 迭代 −Ric ω_m + t·ω_{m−1} + Θ = ω_m，t = (a−1)/a。
每一步化為 Liouville 方程

    log((β_m + L u_m)/Ω) = u_m − t·u_{m−1}

並以 ma_solver.solve_liouville 求解。上同調類以精確有理數追蹤。
"""

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from ..core.config import IterationSettings, SolverSettings
from ..core.exceptions import (
    ClassMismatchError,
    NotBigError,
    PositivityError,
    TraceTooShortError,
)
from ..core.logging import get_logger
from ..discretization.grid import (
    TWO_PI,
    GridField,
    RadialGrid,
    build_grid,
    grid_for_pair,
)
from ..geometry.model import CANONICAL_DEGREE, LogPair, MarkedSphereModel, QLineBundle
from ..geometry.weights import Density, MetricWeight
from .ma_solver import (
    LiouvilleProblem,
    PerturbationSchedule,
    SolveReport,
    auxiliary_weight,
    orbifold_potential,
    require_klt,
    solve_liouville,
)

logger = get_logger(__name__)


def alpha_sequence(a: int, count: int) -> List[Fraction]:
    """α_m = (1/a)·((a−1)/a)^{m−1}，m = 1..count"""
    t = Fraction(a - 1, a)
    return [Fraction(1, a) * t ** (m - 1) for m in range(1, count + 1)]


def area_recursion(
    initial: Fraction, kappa: Fraction, t: Fraction, count: int
) -> List[Fraction]:
    """A_m/2π = κ + t·A_{m−1}/2π，回傳 A_0..A_count（以 2π 為單位）"""
    areas = [Fraction(initial)]
    for _ in range(count):
        areas.append(kappa + t * areas[-1])
    return areas


@dataclass
class IterationTrace:
    """
    Ricci 迭代軌跡

    areas 以 2π 為單位的精確有理數記錄，numeric_areas 為離散質量。
    potentials[0] 為 u_0 = 0。
    """

    a: int
    t: Fraction
    potentials: List[GridField] = field(default_factory=list, repr=False)
    densities: List[Density] = field(default_factory=list, repr=False)
    log_densities: List[np.ndarray] = field(default_factory=list, repr=False)
    areas: List[Fraction] = field(default_factory=list)
    numeric_areas: List[float] = field(default_factory=list)
    sup_diffs: List[float] = field(default_factory=list)
    inf_diffs: List[float] = field(default_factory=list)
    ratio_estimates: List[float] = field(default_factory=list)
    alpha_m: List[Fraction] = field(default_factory=list)
    residuals: List[float] = field(default_factory=list)
    chern_lu: List[float] = field(default_factory=list)
    almost_monotone: List[float] = field(default_factory=list)
    mass_bound_checks: List[bool] = field(default_factory=list)
    converged: bool = False
    failed: bool = False
    delta: float = 0.0
    extrapolated: Optional[np.ndarray] = field(default=None, repr=False)
    fixed_point_residual: Optional[float] = None
    delta_runs: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def steps(self) -> int:
        """已完成的步數 m"""
        return len(self.sup_diffs)

    @property
    def grid(self) -> RadialGrid:
        return self.potentials[-1].grid

    @property
    def scale(self) -> float:
        """極限形式的縮放 1 − t（預設為 1/a）"""
        return float(1 - self.t)

    def limit_log_density(self) -> np.ndarray:
        """(1−t)·ω_m 的對數密度"""
        return self.log_densities[-1] + np.log(self.scale)

    def diff_norms(self) -> List[float]:
        return [max(s, -i) for s, i in zip(self.sup_diffs, self.inf_diffs)]

    def rows(self) -> List[Dict[str, Any]]:
        """CSV 列：m, sup_diff, inf_diff, ratio, area, residual"""
        out = []
        for m in range(1, self.steps + 1):
            out.append(
                {
                    "m": m,
                    "sup_diff": self.sup_diffs[m - 1],
                    "inf_diff": self.inf_diffs[m - 1],
                    "ratio": self.ratio_estimates[m - 1],
                    "area": float(TWO_PI * self.areas[m]),
                    "residual": self.residuals[m - 1],
                }
            )
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {
            "a": self.a,
            "t": str(self.t),
            "steps": self.steps,
            "converged": self.converged,
            "failed": self.failed,
            "delta": self.delta,
            "final_diff": self.diff_norms()[-1] if self.steps else None,
            "areas": [str(x) for x in self.areas],
            "chern_lu_max": max(self.chern_lu) if self.chern_lu else None,
            "fixed_point_residual": self.fixed_point_residual,
            "delta_runs": self.delta_runs,
        }


class _StepRecorder:
    """每一步的差分統計"""

    def __init__(self, trace: IterationTrace, reference_density: np.ndarray):
        self.trace = trace
        self.reference_density = reference_density

    def record(self, report: SolveReport, area: Fraction) -> float:
        trace = self.trace
        previous = trace.potentials[-1].values
        u = report.potential.values
        diff = u - previous
        sup_diff = float(np.max(diff))
        inf_diff = float(np.min(diff))
        norm = max(sup_diff, -inf_diff)
        prev_norms = trace.diff_norms()
        ratio = float("nan")
        if prev_norms and prev_norms[-1] > 0:
            ratio = norm / prev_norms[-1]

        trace.potentials.append(report.potential)
        trace.densities.append(report.density)
        trace.log_densities.append(report.log_density)
        trace.areas.append(area)
        trace.numeric_areas.append(report.area)
        trace.sup_diffs.append(sup_diff)
        trace.inf_diffs.append(inf_diff)
        trace.ratio_estimates.append(ratio)
        trace.residuals.append(report.residual_norm)
        trace.chern_lu.append(
            float(np.max(self.reference_density / np.exp(report.log_density)))
        )
        return norm


def _resolve_t(a: int, t: Optional[Any]) -> Fraction:
    if a < 1:
        raise ValueError(f"a must be a positive integer, got {a}")
    value = Fraction(a - 1, a) if t is None else Fraction(t)
    if not 0 <= value < 1:
        raise ValueError(f"Iteration parameter t must lie in [0, 1), got {value}")
    return value


def _extrapolate(trace: IterationTrace) -> None:
    """幾何尾部外插 u_∞ ≈ u_m + t/(1−t)·(u_m − u_{m−1})"""
    if len(trace.potentials) < 2:
        return
    t = float(trace.t)
    u_m = trace.potentials[-1].values
    u_prev = trace.potentials[-2].values
    trace.extrapolated = u_m + t / (1.0 - t) * (u_m - u_prev)


def _fixed_point_residual(
    grid: RadialGrid,
    background: MetricWeight,
    log_omega: np.ndarray,
    t: Fraction,
    u: np.ndarray,
) -> float:
    """極限方程 log((β_∞ + L u)/Ω) = (1−t)·u 的質量加權殘差"""
    w = grid.weights
    beta = background.curvature_density(grid)
    lhs = w * beta + grid.apply_laplacian(u)
    rhs = w * np.exp(log_omega + float(1 - t) * u)
    return float(np.sum(np.abs(lhs - rhs)) / (TWO_PI * float(background.degree)))


def _as_grid(
    model_or_grid: Union[MarkedSphereModel, RadialGrid],
    settings: Optional[Any] = None,
) -> RadialGrid:
    if isinstance(model_or_grid, RadialGrid):
        return model_or_grid
    return build_grid(model_or_grid, settings=settings)


def iterate_smooth(
    model_or_grid: Union[MarkedSphereModel, RadialGrid],
    drift_weight: MetricWeight,
    omega0: MetricWeight,
    a: int,
    m_max: Optional[int] = None,
    tol: Optional[float] = None,
    *,
    t: Optional[Any] = None,
    solver_settings: Optional[SolverSettings] = None,
    settings: Optional[IterationSettings] = None,
) -> IterationTrace:
    """
    光滑漂移的 Ricci 迭代

    每一步背景為 ω₀ 的勢加上次數 A_m/2π，Ω 由 log Ω = (1−t)·φ₀ − φ_L 固定，
    漂移為 −t·u_{m−1}。sup|u_m − u_{m−1}| < tol 時停止。

    Args:
        model_or_grid: 標記球面或網格（權重有光滑部分時需給網格）
        drift_weight: 線叢 L 的度量 h_L
        omega0: 起始形式 ω₀ 的權重
        a: 正整數，t 預設為 (a−1)/a
        m_max: 最大步數
        tol: 停止容許值
        t: 迭代參數（傳遞用）
        solver_settings: 求解器配置
        settings: 迭代配置

    Returns:
        IterationTrace: 迭代軌跡

    Raises:
        NotBigError: deg(K_X + L) ≤ 0
        PositivityError: h_L 的曲率在某節點為負
    """
    settings = settings or IterationSettings()
    m_max = settings.m_max if m_max is None else m_max
    tol = settings.tolerance if tol is None else tol
    t_value = _resolve_t(a, t)
    grid = _as_grid(model_or_grid)

    kappa = CANONICAL_DEGREE + drift_weight.degree
    if kappa <= 0:
        raise NotBigError(
            f"deg(K_X + L) = {kappa} is not positive", degree=kappa
        )
    theta_l = drift_weight.curvature_density(grid)
    if np.min(theta_l) < 0:
        raise PositivityError(
            f"Drift curvature is negative (min {float(np.min(theta_l)):.3e})"
        )

    phi0 = omega0.smooth(grid)
    log_omega = float(1 - t_value) * phi0 - drift_weight.smooth(grid)
    rhs = Density(np.exp(log_omega), {})
    reference_density = omega0.curvature_density(grid)

    areas = area_recursion(omega0.degree, kappa, t_value, m_max)
    trace = IterationTrace(a=a, t=t_value)
    trace.areas.append(areas[0])
    trace.potentials.append(GridField(np.zeros(grid.size), grid))
    trace.alpha_m = alpha_sequence(a, m_max)
    recorder = _StepRecorder(trace, reference_density)

    for m in range(1, m_max + 1):
        background = MetricWeight(phi0, {}, QLineBundle(areas[m]))
        previous = trace.potentials[-1].values
        problem = LiouvilleProblem(
            background, rhs, 1.0, GridField(-float(t_value) * previous, grid)
        )
        report = solve_liouville(
            problem, grid, settings=solver_settings, u0=previous
        )
        if not report.converged:
            trace.failed = True
            logger.warning(
                "Ricci step did not converge; trace truncated",
                m=m,
                residual=report.residual_norm,
            )
            break
        norm = recorder.record(report, areas[m])
        logger.debug("Ricci step", m=m, diff=norm, residual=report.residual_norm)
        if t_value == 0 or norm < tol:
            trace.converged = True
            break

    trace.alpha_m = trace.alpha_m[: trace.steps]
    _extrapolate(trace)
    if trace.steps:
        limit_degree = kappa / (1 - t_value)
        limit_u = (
            trace.extrapolated
            if trace.extrapolated is not None
            else trace.potentials[-1].values
        )
        trace.fixed_point_residual = _fixed_point_residual(
            grid,
            MetricWeight(phi0, {}, QLineBundle(limit_degree)),
            log_omega,
            t_value,
            limit_u,
        )
    logger.info(
        "Smooth Ricci iteration finished",
        a=a,
        steps=trace.steps,
        converged=trace.converged,
        failed=trace.failed,
    )
    return trace


def _singular_background(
    grid: RadialGrid,
    pair: LogPair,
    reference: MetricWeight,
    a: int,
    delta: float,
    t_power: float,
    lam: np.ndarray,
    E_weight: Optional[MetricWeight],
) -> MetricWeight:
    """a·(ω_P + δ·t^m·(Θ_E + i∂∂̄Λ))"""
    phi_p = reference.smooth(grid)
    scale = delta * t_power
    smooth = phi_p + scale * lam
    bundle = pair.log_canonical
    if E_weight is not None and scale > 0:
        smooth = smooth + scale * E_weight.smooth(grid)
        bundle = QLineBundle(
            bundle.degree + E_weight.degree * Fraction(scale), bundle.denominator
        )
    weight = MetricWeight(a * smooth, {}, bundle.scaled(a))
    density = weight.curvature_density(grid)
    if np.min(density) <= 0:
        raise PositivityError(
            f"Perturbed iteration background is not positive (delta={delta:g})"
        )
    return weight


def _run_singular_delta(
    grid: RadialGrid,
    pair: LogPair,
    reference: MetricWeight,
    a: int,
    t_value: Fraction,
    delta: float,
    schedule: PerturbationSchedule,
    m_max: int,
    tol: float,
    warm: Optional[IterationTrace],
    solver_settings: Optional[SolverSettings],
) -> IterationTrace:
    E_weight = schedule.E_weight if delta > 0 else None
    lam = orbifold_potential(grid, pair, schedule.epsilon)
    log_sigma_e = (
        E_weight.section_log_norm(grid) if E_weight is not None else np.zeros(grid.size)
    )
    exponents = {i: -float(d) for i, d in pair.divisor.entries}
    rhs = Density(np.exp(reference.smooth(grid)), exponents)
    t = float(t_value)

    base = _singular_background(grid, pair, reference, a, delta, 1.0, lam, E_weight)
    trace = IterationTrace(a=a, t=t_value, delta=delta)
    trace.potentials.append(GridField(np.zeros(grid.size), grid))
    trace.areas.append(base.degree)
    trace.alpha_m = alpha_sequence(a, m_max)
    recorder = _StepRecorder(trace, base.curvature_density(grid))

    for m in range(1, m_max + 1):
        background = _singular_background(
            grid, pair, reference, a, delta, t**m, lam, E_weight
        )
        previous = trace.potentials[-1].values
        guess = previous
        if warm is not None and m < len(warm.potentials):
            guess = warm.potentials[m].values
        problem = LiouvilleProblem(
            background, rhs, 1.0, GridField(-t * previous, grid)
        )
        report = solve_liouville(problem, grid, settings=solver_settings, u0=guess)
        if not report.converged:
            trace.failed = True
            logger.warning(
                "Singular Ricci step did not converge; trace truncated",
                m=m,
                delta=delta,
                residual=report.residual_norm,
            )
            break

        prev_log_density = trace.log_densities[-1] if trace.log_densities else None
        norm = recorder.record(report, background.degree)

        # 奇異度量 h_m 的有限質量與 AM–GM 面積界
        if prev_log_density is not None:
            log_h = (1 - t) * report.log_density + t * prev_log_density
            mass = float(np.sum(grid.weights * np.exp(log_h)))
            bound = (1 - t) * report.area + t * trace.numeric_areas[-2]
            trace.mass_bound_checks.append(
                bool(np.isfinite(mass) and mass <= bound * (1 + 1e-12))
            )

        if t > 0:
            alpha = float(trace.alpha_m[m - 1])
            shifted = (
                report.potential.values - previous - alpha * delta * log_sigma_e
            )
            trace.almost_monotone.append(-float(np.min(shifted)) / t ** (m - 1))

        if t == 0 or norm < tol:
            trace.converged = True
            break

    trace.alpha_m = trace.alpha_m[: trace.steps]
    _extrapolate(trace)
    return trace


def iterate_singular(
    pair: LogPair,
    reference: Optional[MetricWeight] = None,
    a: Optional[int] = None,
    schedule: Optional[PerturbationSchedule] = None,
    m_max: Optional[int] = None,
    tol: Optional[float] = None,
    *,
    grid: Optional[RadialGrid] = None,
    solver_settings: Optional[SolverSettings] = None,
    settings: Optional[IterationSettings] = None,
) -> IterationTrace:
    """
    KLT 對上的奇異 Ricci 迭代

    外層沿 δ 排程，內層 m 迴圈由前一個 δ 的同一步暖啟動；最後執行 δ = 0。
    每一步求解 log((a·ω_{m,δ,0} + L u_m)/Ω) = −Σ d_i G_i + u_m − t·u_{m−1}。

    Args:
        pair: KLT 對
        reference: h_P 的權重（預設為 FS 冪）
        a: 使 a·D 為整係數的正整數（預設為 D 的分母）
        schedule: δ 排程（None 為直接執行 δ = 0）
        m_max: 每個 δ 的最大步數
        tol: 停止容許值
        grid: 網格
        solver_settings: 求解器配置
        settings: 迭代配置

    Returns:
        IterationTrace: δ = 0 的軌跡，delta_runs 記錄每個 δ 的摘要

    Raises:
        InvalidDivisorError: LC 或不合法的對
        NotBigError: deg(K_X + D) ≤ 0
    """
    require_klt(pair)
    settings = settings or IterationSettings()
    m_max = settings.m_max if m_max is None else m_max
    tol = settings.tolerance if tol is None else tol
    a = pair.a if a is None else a
    if a % pair.a != 0:
        raise ValueError(f"a = {a} does not clear the denominators of D ({pair.a})")
    t_value = Fraction(a - 1, a)
    grid = grid or grid_for_pair(pair)
    reference = reference or MetricWeight(None, {}, pair.log_canonical)
    if reference.degree != pair.degree:
        raise ClassMismatchError(
            f"Reference weight has degree {reference.degree}, expected {pair.degree}"
        )
    if schedule is None:
        schedule = PerturbationSchedule((), E_weight=auxiliary_weight(pair))

    runs: List[Dict[str, Any]] = []
    warm: Optional[IterationTrace] = None
    for delta in list(schedule.delta_values) + [0.0]:
        trace = _run_singular_delta(
            grid,
            pair,
            reference,
            a,
            t_value,
            delta,
            schedule,
            m_max,
            tol,
            warm,
            solver_settings,
        )
        runs.append(
            {
                "delta": delta,
                "steps": trace.steps,
                "converged": trace.converged,
                "final_diff": trace.diff_norms()[-1] if trace.steps else None,
                "almost_monotone_max": (
                    max(trace.almost_monotone) if trace.almost_monotone else None
                ),
                "mass_bound": all(trace.mass_bound_checks),
            }
        )
        logger.debug("Singular iteration delta finished", **runs[-1])
        warm = trace
        if trace.failed:
            break

    trace.delta_runs = runs
    logger.info(
        "Singular Ricci iteration finished",
        a=a,
        steps=trace.steps,
        converged=trace.converged,
        deltas=len(runs),
    )
    return trace


# ----------------------------------------------------------------------
# 收縮與唯一性
# ----------------------------------------------------------------------


@dataclass
class ContractionReport:
    """收縮比報告"""

    bound: float
    fitted_ratio: float
    rows: List[Dict[str, Any]]
    passed: bool
    last_diff: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "bound": self.bound,
            "fitted_ratio": self.fitted_ratio,
            "passed": self.passed,
            "last_diff": self.last_diff,
            "rows": self.rows,
        }


def _fit_ratio(values: Sequence[float], floor: float) -> float:
    data = [(i, v) for i, v in enumerate(values) if v > floor]
    if len(data) < 2:
        return float("nan")
    x = np.array([i for i, _ in data], dtype=float)
    y = np.log(np.array([v for _, v in data]))
    slope = np.polyfit(x, y, 1)[0]
    return float(np.exp(slope))


def contraction_report(
    trace: IterationTrace,
    slack: Optional[float] = None,
    noise_floor: float = 1e-8,
) -> ContractionReport:
    """
    逐步收縮比

    檢查 sup(u_m − u_{m−1}) ≤ t·sup(u_{m−1} − u_{m−2}) 與 inf 的對應不等式，
    以及 sup 範數比 ≤ t + slack。差分低於 noise_floor 的步驟不檢查。

    Args:
        trace: 迭代軌跡（長度 ≥ 3）
        slack: 容許的比值餘量
        noise_floor: 差分的雜訊下限

    Returns:
        ContractionReport: 逐步表格與擬合比值

    Raises:
        TraceTooShortError: 軌跡長度 < 3
    """
    if trace.steps < 3:
        raise TraceTooShortError(
            f"Contraction needs at least 3 steps, trace has {trace.steps}"
        )
    slack = IterationSettings().ratio_slack if slack is None else slack
    t = float(trace.t)
    norms = trace.diff_norms()
    rows: List[Dict[str, Any]] = []
    passed = True
    for m in range(2, trace.steps + 1):
        prev_sup, prev_inf = trace.sup_diffs[m - 2], trace.inf_diffs[m - 2]
        cur_sup, cur_inf = trace.sup_diffs[m - 1], trace.inf_diffs[m - 1]
        prev_norm = norms[m - 2]
        ratio = norms[m - 1] / prev_norm if prev_norm > 0 else float("nan")
        checked = prev_norm > noise_floor
        ok = True
        if checked:
            ok = (
                ratio <= t + slack
                and cur_sup <= t * prev_sup + slack * prev_norm
                and cur_inf >= t * prev_inf - slack * prev_norm
            )
        passed &= ok
        rows.append(
            {
                "m": m,
                "sup_diff": cur_sup,
                "inf_diff": cur_inf,
                "sup_ratio": cur_sup / prev_sup if prev_sup != 0 else float("nan"),
                "inf_ratio": cur_inf / prev_inf if prev_inf != 0 else float("nan"),
                "norm_ratio": ratio,
                "checked": checked,
                "ok": ok,
            }
        )
    if not passed:
        logger.warning("Contraction bound violated", bound=t, slack=slack)
    return ContractionReport(
        bound=t,
        fitted_ratio=_fit_ratio(norms, noise_floor),
        rows=rows,
        passed=passed,
        last_diff=norms[-1],
    )


@dataclass
class UniquenessReport:
    """兩個參考權重下極限的差異"""

    discrepancy: float
    per_step: List[float]
    fitted_ratio: float
    traces: List[IterationTrace] = field(default_factory=list, repr=False)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "discrepancy": self.discrepancy,
            "per_step": self.per_step,
            "fitted_ratio": self.fitted_ratio,
        }


def uniqueness_check(
    pair: LogPair,
    a: Optional[int],
    references: Sequence[MetricWeight],
    *,
    schedule: Optional[PerturbationSchedule] = None,
    grid: Optional[RadialGrid] = None,
    m_max: Optional[int] = None,
    tol: Optional[float] = None,
    solver_settings: Optional[SolverSettings] = None,
    settings: Optional[IterationSettings] = None,
) -> UniquenessReport:
    """
    以兩個參考權重執行奇異迭代並比較極限

    Args:
        pair: KLT 對
        a: 迭代參數
        references: 兩個 h_P 權重
        schedule: δ 排程
        grid: 網格
        m_max: 最大步數
        tol: 停止容許值
        solver_settings: 求解器配置
        settings: 迭代配置

    Returns:
        UniquenessReport: 極限對數密度的 sup 差與逐步差異

    Raises:
        ClassMismatchError: 參考權重不屬於 K_X + D 的類
    """
    if len(references) != 2:
        raise ValueError("uniqueness_check expects exactly two reference weights")
    for ref in references:
        if ref.degree != pair.degree:
            raise ClassMismatchError(
                f"Reference of degree {ref.degree} does not metrize K_X + D "
                f"(degree {pair.degree})"
            )
    grid = grid or grid_for_pair(pair)
    traces = [
        iterate_singular(
            pair,
            ref,
            a,
            schedule,
            m_max,
            tol,
            grid=grid,
            solver_settings=solver_settings,
            settings=settings,
        )
        for ref in references
    ]
    first, second = traces
    discrepancy = float(
        np.max(np.abs(first.limit_log_density() - second.limit_log_density()))
    )
    steps = min(len(first.log_densities), len(second.log_densities))
    per_step = [
        float(np.max(np.abs(first.log_densities[m] - second.log_densities[m])))
        for m in range(steps)
    ]
    report = UniquenessReport(
        discrepancy=discrepancy,
        per_step=per_step,
        fitted_ratio=_fit_ratio(per_step, 1e-12),
        traces=traces,
    )
    logger.info(
        "Uniqueness check finished",
        discrepancy=discrepancy,
        fitted_ratio=report.fitted_ratio,
    )
    return report
