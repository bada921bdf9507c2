"""
完備雙曲度量的獨立求解器

在 n ≥ 3 個尖點的球面上求解 −Ric ω_H = ω_H。未知量為

    w = ψ − Σ m_i，  m_i = log 2 − log q_i − 2·log log(C/q_i)

其中 ψ = log(ω_H/ω_FS)、q_i = χ_i²。m_i 為尖點的精確模型，
其 Laplacian 的正則部分 L m_i = 1 − 2/ℓ + 2(1−q)/(q·ℓ²)，ℓ = log(C/q)，
方程化為 L w − e^{M+w} = 2 − Σ L m_i。
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.config import LimitSettings, SolverSettings
from ..core.exceptions import LimitError
from ..core.logging import get_logger
from ..discretization.grid import TWO_PI, RadialGrid
from ..geometry.weights import Density
from ..solvers.ma_solver import SolveReport
from ..solvers.newton import LiouvilleNewton
from .sweeps import TSweep

logger = get_logger(__name__)


def cusp_cap_mass(q: np.ndarray, log_offset: float) -> np.ndarray:
    """
    ∫_{χ² < q} (L m)_reg ω_FS 的閉式 = 2π·(q + 2(1−q)/log(C/q))

    q = 0 時為 0，q = 1 時為 2π。
    """
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore"):
        ell = np.log(log_offset / q)
    return TWO_PI * (q + 2.0 * (1.0 - q) / ell)


def model_laplacian(q: np.ndarray, log_offset: float) -> np.ndarray:
    """L m 的正則部分"""
    ell = np.log(log_offset / q)
    return 1.0 - 2.0 / ell + 2.0 * (1.0 - q) / (q * ell**2)


@dataclass
class HyperbolicOracle:
    """
    完備雙曲度量的網格解

    Attributes:
        grid: 網格
        punctures: 尖點的標記點索引
        log_density: ψ = log(ω_H/ω_FS)
        report: Newton 求解報告
    """

    grid: RadialGrid = field(repr=False)
    punctures: Tuple[int, ...]
    log_offset: float
    log_density: np.ndarray = field(repr=False)
    report: SolveReport = field(repr=False)

    @property
    def area(self) -> float:
        return float(np.sum(self.grid.weights * np.exp(self.log_density)))

    @property
    def expected_area(self) -> float:
        return TWO_PI * (len(self.punctures) - 2)

    @property
    def converged(self) -> bool:
        return self.report.converged

    def regular_mask(self, radius: float) -> np.ndarray:
        return self.grid.excision_mask(self.punctures, radius)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "punctures": list(self.punctures),
            "area": self.area,
            "expected_area": self.expected_area,
            "converged": self.converged,
            "residual": self.report.residual_norm,
        }

    @classmethod
    def solve(
        cls,
        grid: RadialGrid,
        punctures: Sequence[int],
        *,
        settings: Optional[LimitSettings] = None,
        solver_settings: Optional[SolverSettings] = None,
    ) -> "HyperbolicOracle":
        """
        求解尖點集合 punctures 上的完備雙曲度量

        Raises:
            LimitError: 尖點少於三個，或 Newton 未收斂
        """
        settings = settings or LimitSettings()
        punctures = tuple(sorted(set(int(i) for i in punctures)))
        if len(punctures) < 3:
            raise LimitError(
                f"A complete hyperbolic metric needs at least 3 cusps, "
                f"got {len(punctures)}"
            )
        C = settings.cusp_log_offset
        w = grid.weights
        model_sum = np.zeros(grid.size)
        source_mass = np.zeros(grid.size)
        for index in punctures:
            q = effective_chordal_sq(grid, index)
            model_sum += np.log(2.0) - np.log(q) - 2.0 * np.log(np.log(C / q))
            source_mass += _rearranged_source(grid, q, C)

        background = source_mass / w - 2.0
        result = LiouvilleNewton(grid, solver_settings).solve(background, model_sum)
        report = SolveReport(
            potential=grid.field(result.u),
            residual_norm=result.residual,
            newton_iterations=result.iterations,
            bounds=(float(np.max(result.u)), float(np.min(result.u))),
            area=result.area,
            converged=result.converged,
            target_area=result.target_area,
            log_density=result.log_density,
            density=Density(np.exp(result.log_density), {}),
            log_residual=result.log_residual,
            max_principle_gap=result.max_principle_gap,
            conservation_defect=result.conservation_defect,
        )
        if not result.converged:
            raise LimitError(
                f"Hyperbolic oracle did not converge (residual {result.residual:.3e})"
            )
        oracle = cls(grid, punctures, C, result.log_density, report)
        logger.info(
            "Hyperbolic oracle solved",
            punctures=list(punctures),
            area=oracle.area,
            expected_area=oracle.expected_area,
            iterations=result.iterations,
        )
        return oracle


def effective_chordal_sq(grid: RadialGrid, index: int) -> np.ndarray:
    """節點 χ²，下限為胞面積的 1/(4π)"""
    q = grid.chordal_sq(index)
    return np.maximum(q, grid.weights / (2.0 * TWO_PI))


def _rearranged_source(
    grid: RadialGrid, q: np.ndarray, log_offset: float
) -> np.ndarray:
    """
    每個胞的 ∫(L m)_reg ω_FS

    依 χ² 排序累積胞面積得到等面積的 χ² 區間 [q_lo, q_hi]，
    胞質量取閉式 cap mass 的差；χ² 相同的節點（同一環）平分該組質量。
    總和精確為 2π。
    """
    w = grid.weights
    order = np.argsort(q, kind="stable")
    values, group = np.unique(q[order], return_inverse=True)
    group_area = np.bincount(group, weights=w[order], minlength=values.size)
    cumulative = np.cumsum(group_area)
    total = cumulative[-1]
    q_hi = cumulative / total
    q_lo = np.concatenate([[0.0], q_hi[:-1]])
    group_mass = cusp_cap_mass(q_hi, log_offset) - cusp_cap_mass(q_lo, log_offset)
    mass = np.empty(grid.size)
    mass[order] = group_mass[group] * w[order] / group_area[group]
    return mass


@dataclass(frozen=True)
class DominationReport:
    """單一 t 的 Schwarz 控制：min(log ρ_H − log ρ_t) 於正則集"""

    t: Optional[float]
    margin: float
    dominated: bool
    worst_node: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "t": self.t,
            "margin": self.margin,
            "dominated": self.dominated,
            "worst_node": self.worst_node,
        }


def schwarz_domination_check(
    sweep: TSweep,
    oracle: HyperbolicOracle,
    *,
    tolerance: float = 1e-2,
    settings: Optional[LimitSettings] = None,
) -> List[DominationReport]:
    """
    典範密度是否被輔助完備度量控制：dμ_can,t ≤ ω_H

    比較在移除 ω_H 尖點與除子點鄰域後的共同正則集上進行。
    尖點集合漏掉某個除子點時，該點附近的密度發散，檢查應失敗。

    Args:
        sweep: TSweep
        oracle: 在擴大尖點集合上的雙曲度量
        tolerance: 對數密度容許值
        settings: 極限配置（excision_radius）

    Returns:
        List[DominationReport]: 每個 t 的報告
    """
    settings = settings or LimitSettings()
    grid = sweep.grid
    grid.require_compatible(oracle.grid)
    radius = settings.excision_radius
    mask = oracle.regular_mask(radius)
    covered = [i for i, _ in sweep.pair.divisor.entries if i in oracle.punctures]
    mask &= grid.excision_mask(covered, radius)

    reports = []
    t_values = list(sweep.t_values) or [None] * len(sweep.reports)
    for t, report in zip(t_values, sweep.reports):
        gap = oracle.log_density - report.log_density
        gap = np.where(mask, gap, np.inf)
        worst = int(np.argmin(gap))
        margin = float(gap[worst])
        reports.append(
            DominationReport(
                t=None if t is None else float(t),
                margin=margin,
                dominated=margin >= -tolerance,
                worst_node=worst,
            )
        )
    logger.info(
        "Schwarz domination checked",
        punctures=list(oracle.punctures),
        min_margin=min(r.margin for r in reports),
        dominated=all(r.dominated for r in reports),
    )
    return reports
