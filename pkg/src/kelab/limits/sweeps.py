"""
典範測度的 t 掃描

對 LC 對 (X, D) 沿 t ↑ 1 求解 t·D 的典範 Kähler–Einstein 體積形式，
所有 t 共用同一網格，以便逐節點檢查單調性。
"""

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from ..core.config import LimitSettings, SolverSettings
from ..core.exceptions import (
    AdmissibilityError,
    InvalidDivisorError,
    LimitError,
    MonotonicityError,
)
from ..core.logging import get_logger
from ..discretization.grid import TWO_PI, RadialGrid, grid_for_pair
from ..geometry.model import CANONICAL_DEGREE, LogDivisor, LogPair, PairClass
from ..solvers.ma_solver import (
    PerturbationSchedule,
    SolveReport,
    solve_canonical_KE_klt,
)

logger = get_logger(__name__)


def default_t_values(settings: Optional[LimitSettings] = None) -> List[Fraction]:
    """{1 − 2^{−k}}，k = k_min..k_max"""
    settings = settings or LimitSettings()
    return [1 - Fraction(1, 2**k) for k in range(settings.k_min, settings.k_max + 1)]


def admissibility_threshold(pair: LogPair) -> Fraction:
    """ε₀ = 1 − 2/Σd：t > 1 − ε₀ 時 t·D 為對數一般型"""
    total = pair.divisor.degree
    if total <= 0:
        return Fraction(0)
    return 1 - Fraction(-CANONICAL_DEGREE) / total


@dataclass
class TSweep:
    """
    沿除子序列 D_k 的典範解

    t 掃描時 divisors[k] = t_k·D；sweep_divisors 時 t_values 為空。
    margins[k] 為 min(log ρ_{k+1} − log ρ_k)。
    """

    pair: LogPair
    grid: RadialGrid = field(repr=False)
    divisors: List[LogDivisor]
    reports: List[SolveReport] = field(repr=False)
    t_values: List[Fraction] = field(default_factory=list)
    margins: List[float] = field(default_factory=list)
    tolerance: float = 1e-8

    @property
    def log_densities(self) -> List[np.ndarray]:
        return [report.log_density for report in self.reports]

    @property
    def areas(self) -> List[float]:
        return [report.area for report in self.reports]

    @property
    def expected_areas(self) -> List[float]:
        return [
            float(TWO_PI * (divisor.degree + CANONICAL_DEGREE))
            for divisor in self.divisors
        ]

    @property
    def min_margin(self) -> float:
        return min(self.margins) if self.margins else 0.0

    @property
    def monotone(self) -> bool:
        return self.min_margin >= -self.tolerance

    def require_monotone(self) -> None:
        """
        Raises:
            MonotonicityError: 某對相鄰成員的密度下降超過容許值
        """
        if self.monotone:
            return
        k = int(np.argmin(self.margins))
        raise MonotonicityError(
            f"Canonical densities decrease between members {k} and {k + 1} "
            f"(margin {self.margins[k]:.3e} < {-self.tolerance:g})",
            margin=self.margins[k],
            member=k,
        )

    def rows(self) -> List[Dict[str, Any]]:
        """CSV 列：t（或 k）、面積、密度範圍、單調性餘量"""
        out = []
        for k, report in enumerate(self.reports):
            row: Dict[str, Any] = {}
            if self.t_values:
                row["t"] = float(self.t_values[k])
            else:
                row["k"] = k
            density = np.exp(report.log_density)
            row.update(
                {
                    "area": report.area,
                    "expected_area": self.expected_areas[k],
                    "min_density": float(np.min(density)),
                    "max_density": float(np.max(density)),
                    "margin": self.margins[k - 1] if k > 0 else None,
                }
            )
            out.append(row)
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {
            "t_values": [str(t) for t in self.t_values],
            "divisors": [d.to_dict() for d in self.divisors],
            "areas": self.areas,
            "expected_areas": self.expected_areas,
            "margins": self.margins,
            "monotone": self.monotone,
        }


def _solve_divisor(
    pair: LogPair,
    divisor: LogDivisor,
    grid: RadialGrid,
    tol: Optional[float],
    solver_settings: Optional[SolverSettings],
) -> SolveReport:
    member = LogPair(pair.model, divisor)
    result = solve_canonical_KE_klt(
        member,
        PerturbationSchedule.direct(),
        grid,
        tol,
        settings=solver_settings,
    )
    return result.final


def _run_sweep(
    pair: LogPair,
    divisors: Sequence[LogDivisor],
    grid: Optional[RadialGrid],
    tol: Optional[float],
    t_values: Sequence[Fraction],
    settings: LimitSettings,
    solver_settings: Optional[SolverSettings],
    strict: bool,
    n_jobs: int,
) -> TSweep:
    grid = grid or grid_for_pair(pair)
    reports = list(
        Parallel(n_jobs=n_jobs)(
            delayed(_solve_divisor)(pair, d, grid, tol, solver_settings)
            for d in divisors
        )
    )
    margins = [
        float(np.min(b.log_density - a.log_density))
        for a, b in zip(reports[:-1], reports[1:])
    ]
    sweep = TSweep(
        pair=pair,
        grid=grid,
        divisors=list(divisors),
        reports=reports,
        t_values=list(t_values),
        margins=margins,
        tolerance=settings.monotonicity_tolerance,
    )
    for report, divisor in zip(reports, divisors):
        if not report.converged:
            logger.warning(
                "Sweep member did not converge",
                divisor=divisor.to_dict(),
                residual=report.residual_norm,
            )
    if strict:
        sweep.require_monotone()
    logger.info(
        "Canonical sweep finished",
        members=len(reports),
        min_margin=sweep.min_margin,
        monotone=sweep.monotone,
    )
    return sweep


def sweep_t(
    pair: LogPair,
    t_values: Optional[Sequence[Any]] = None,
    grid: Optional[RadialGrid] = None,
    tol: Optional[float] = None,
    *,
    settings: Optional[LimitSettings] = None,
    solver_settings: Optional[SolverSettings] = None,
    strict: bool = True,
    n_jobs: int = 1,
) -> TSweep:
    """
    沿 t 求解 t·D 的典範 KE 體積形式

    Args:
        pair: LC（或 KLT）對，deg(K_X + D) > 0
        t_values: 非遞減的 t 值（預設 {1 − 2^{−k}}，只保留允許區間內的值）
        grid: 共用網格（預設依 pair 建立）
        tol: 求解容許值
        settings: 極限配置
        solver_settings: 求解器配置
        strict: 單調性被違反時拋出
        n_jobs: 並行求解的工作數

    Returns:
        TSweep: 各 t 的解與單調性餘量

    Raises:
        InvalidDivisorError: 係數不合法
        AdmissibilityError: 某 t 使 t·Σd ≤ 2 或 t·D 非 KLT
        MonotonicityError: 密度沿 t 非遞增（strict 時）
    """
    settings = settings or LimitSettings()
    if pair.classification == PairClass.INVALID:
        raise InvalidDivisorError(
            "Divisor coefficients must lie in (0, 1]", entry=pair.divisor.to_dict()
        )
    epsilon0 = admissibility_threshold(pair)
    lower = 1 - epsilon0
    upper_inclusive = pair.classification == PairClass.KLT

    def admissible(t: Fraction) -> bool:
        return epsilon0 > 0 and t > lower and (t < 1 or (upper_inclusive and t == 1))

    if t_values is None:
        values = [t for t in default_t_values(settings) if admissible(t)]
        if not values:
            raise AdmissibilityError(
                f"No default t lies in the admissible window (1 - {epsilon0}, 1)",
                epsilon0=float(epsilon0),
            )
    else:
        values = [Fraction(t) for t in t_values]
        for t in values:
            if not admissible(t):
                raise AdmissibilityError(
                    f"t = {t} is outside the admissible window "
                    f"(1 - epsilon0, 1) with epsilon0 = {epsilon0}",
                    epsilon0=float(epsilon0),
                )
    if not values:
        raise LimitError("t sweep needs at least one value")
    if any(b < a for a, b in zip(values, values[1:])):
        raise LimitError(f"t values must be nondecreasing: {[str(t) for t in values]}")

    divisors = [pair.divisor.scaled(t) for t in values]
    return _run_sweep(
        pair,
        divisors,
        grid,
        tol,
        values,
        settings,
        solver_settings,
        strict,
        n_jobs,
    )


def sweep_divisors(
    pair: LogPair,
    divisors: Sequence[LogDivisor],
    grid: Optional[RadialGrid] = None,
    tol: Optional[float] = None,
    *,
    settings: Optional[LimitSettings] = None,
    solver_settings: Optional[SolverSettings] = None,
    strict: bool = True,
    n_jobs: int = 1,
) -> TSweep:
    """
    沿任意逐係數遞增的 KLT 除子序列 D_k ↑ D 求解

    Raises:
        LimitError: 序列非逐係數遞增或超過 D
        AdmissibilityError: 某 D_k 非 KLT 對數一般型
    """
    settings = settings or LimitSettings()
    if not divisors:
        raise LimitError("Divisor sweep needs at least one member")
    target = pair.divisor.as_dict()
    previous: Dict[int, Fraction] = {}
    for divisor in divisors:
        current = divisor.as_dict()
        if divisor.classification != PairClass.KLT:
            raise AdmissibilityError(f"Sweep member {divisor.to_dict()} is not KLT")
        if divisor.degree + CANONICAL_DEGREE <= 0:
            raise AdmissibilityError(
                f"Sweep member {divisor.to_dict()} is not of log general type",
                epsilon0=float(admissibility_threshold(pair)),
            )
        for index, c in current.items():
            if c > target.get(index, Fraction(0)):
                raise LimitError(f"Sweep member exceeds D at marked point {index}")
        for index, c in previous.items():
            if current.get(index, Fraction(0)) < c:
                raise LimitError(
                    f"Divisor sequence decreases at marked point {index}"
                )
        previous = current
    return _run_sweep(
        pair, divisors, grid, tol, (), settings, solver_settings, strict, n_jobs
    )
