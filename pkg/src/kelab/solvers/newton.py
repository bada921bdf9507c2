"""
Liouville 方程的阻尼 Newton 核心

以質量加權殘差求解

    F(u) = w·ρ₀ + W·L·u − w·R·exp(c·u + drift) = 0

F 為嚴格凹泛函

    Φ(u) = Σ w ρ₀ u + ½ uᵀ(W·L)u − Σ w R exp(c·u + drift)/c

的梯度，Newton 步以 Φ 上的 Armijo 回溯阻尼，並以 sup 範數上限截斷。
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from ..core.config import SolverSettings
from ..core.exceptions import SolverDivergenceError
from ..core.logging import get_logger
from ..discretization.grid import RadialGrid

# 指數的上限，避免試探步溢位
_EXP_CAP = 700.0


@dataclass
class NewtonResult:
    """Newton 求解結果"""

    u: np.ndarray
    converged: bool
    iterations: int
    residual: float
    log_residual: float
    area: float
    target_area: float
    conservation_defect: float
    max_principle_gap: float
    log_density: np.ndarray = field(repr=False)

    @property
    def density(self) -> np.ndarray:
        return np.exp(self.log_density)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "residual": self.residual,
            "log_residual": self.log_residual,
            "area": self.area,
            "target_area": self.target_area,
            "conservation_defect": self.conservation_defect,
            "max_principle_gap": self.max_principle_gap,
            "sup_u": float(np.max(self.u)),
            "inf_u": float(np.min(self.u)),
        }


class LiouvilleNewton:
    """
    質量加權 Liouville 方程的 Newton 求解器

    Args:
        grid: 網格
        settings: 求解器配置
    """

    def __init__(self, grid: RadialGrid, settings: Optional[SolverSettings] = None):
        self.grid = grid
        self.settings = settings or SolverSettings()
        self.logger = get_logger(f"{__name__}.{self.__class__.__name__}")

    def _exponent(
        self, u: np.ndarray, log_rhs: np.ndarray, c: float, drift: np.ndarray
    ) -> np.ndarray:
        return np.minimum(log_rhs + c * u + drift, _EXP_CAP)

    def _residual(
        self,
        u: np.ndarray,
        mass_bg: np.ndarray,
        log_rhs: np.ndarray,
        c: float,
        drift: np.ndarray,
    ) -> np.ndarray:
        w = self.grid.weights
        return (
            mass_bg
            + self.grid.apply_laplacian(u)
            - w * np.exp(self._exponent(u, log_rhs, c, drift))
        )

    def _functional(
        self,
        u: np.ndarray,
        mass_bg: np.ndarray,
        log_rhs: np.ndarray,
        c: float,
        drift: np.ndarray,
    ) -> float:
        w = self.grid.weights
        return float(
            np.dot(mass_bg, u)
            + 0.5 * self.grid.dirichlet_form(u)
            - np.sum(w * np.exp(self._exponent(u, log_rhs, c, drift))) / c
        )

    def solve(
        self,
        background: np.ndarray,
        log_rhs: np.ndarray,
        c: float = 1.0,
        drift: Optional[np.ndarray] = None,
        u0: Optional[np.ndarray] = None,
        tol: Optional[float] = None,
        raise_on_failure: bool = False,
    ) -> NewtonResult:
        """
        求解 ρ₀ + L u = R·exp(c·u + drift)

        Args:
            background: 背景曲率密度 ρ₀（相對 ω_FS）
            log_rhs: 右端密度的對數 log R
            c: u 在指數中的係數（> 0）
            drift: 漂移項
            u0: 初始猜測
            tol: 質量加權殘差容許值
            raise_on_failure: 未收斂時拋出 SolverDivergenceError

        Returns:
            NewtonResult: 求解結果
        """
        grid = self.grid
        settings = self.settings
        tol = settings.tolerance if tol is None else tol
        if c <= 0:
            raise ValueError(f"Exponent coefficient must be positive, got {c}")

        w = grid.weights
        mass_bg = w * np.asarray(background, dtype=float)
        target = float(np.sum(mass_bg))
        scale = max(abs(target), 1e-300)
        drift = np.zeros(grid.size) if drift is None else np.asarray(drift, dtype=float)
        u = np.zeros(grid.size) if u0 is None else np.array(u0, dtype=float)
        log_rhs = np.asarray(log_rhs, dtype=float)

        F = self._residual(u, mass_bg, log_rhs, c, drift)
        residual = float(np.sum(np.abs(F))) / scale
        phi = self._functional(u, mass_bg, log_rhs, c, drift)
        iterations = 0
        converged = residual <= tol

        while not converged and iterations < settings.max_iterations:
            iterations += 1
            m = c * w * np.exp(self._exponent(u, log_rhs, c, drift))
            jacobian = (grid.laplacian_matrix - sp.diags(m)).tocsc()
            step = -splu(jacobian).solve(F)
            step_sup = float(np.max(np.abs(step)))
            if step_sup > settings.max_step:
                step *= settings.max_step / step_sup

            slope = float(np.dot(F, step))
            alpha = 1.0
            accepted = False
            while alpha >= 1e-10:
                trial = u + alpha * step
                F_trial = self._residual(trial, mass_bg, log_rhs, c, drift)
                phi_trial = self._functional(trial, mass_bg, log_rhs, c, drift)
                res_trial = float(np.sum(np.abs(F_trial))) / scale
                # 捨入主導時 Φ 的比較失效，改以殘差下降判斷
                if phi_trial >= phi + settings.armijo * alpha * slope or (
                    res_trial < residual and abs(phi_trial - phi) <= 1e-12 * abs(phi)
                ):
                    accepted = True
                    break
                alpha *= 0.5

            if not accepted:
                self.logger.warning(
                    "Line search stagnated",
                    iterations=iterations,
                    residual=residual,
                )
                break

            u, F, phi, residual = trial, F_trial, phi_trial, res_trial
            self.logger.debug(
                "Newton step",
                iteration=iterations,
                alpha=alpha,
                residual=residual,
            )
            converged = residual <= tol

        result = self._finish(u, background, log_rhs, c, drift, target, residual)
        result.converged = converged
        result.iterations = iterations

        if not converged:
            self.logger.warning(
                "Newton did not converge",
                iterations=iterations,
                residual=residual,
                tolerance=tol,
            )
            if raise_on_failure:
                raise SolverDivergenceError(
                    f"Newton did not reach tolerance {tol:g} after {iterations} "
                    f"iterations (residual {residual:.3e})",
                    residual=residual,
                )
        else:
            self.logger.debug(
                "Newton converged", iterations=iterations, residual=residual
            )
        return result

    def _finish(
        self,
        u: np.ndarray,
        background: np.ndarray,
        log_rhs: np.ndarray,
        c: float,
        drift: np.ndarray,
        target: float,
        residual: float,
    ) -> NewtonResult:
        grid = self.grid
        w = grid.weights
        log_density = log_rhs + c * u + drift
        curvature = np.asarray(background) + grid.laplacian_values(u)
        conserved = float(np.sum(w * curvature))
        scale = max(abs(target), 1e-300)

        positive = curvature > 0
        log_res = (
            float(np.max(np.abs(np.log(curvature[positive]) - log_density[positive])))
            if np.any(positive)
            else float("inf")
        )

        # 最大值原理：在 argmax u 處 L u ≤ 0，故 log(ρ₀/R) − c·u − drift ≥ 0
        i_max = int(np.argmax(u))
        rho0 = float(background[i_max])
        gap = (
            float(np.log(rho0) - log_rhs[i_max] - c * u[i_max] - drift[i_max])
            if rho0 > 0
            else float("nan")
        )

        return NewtonResult(
            u=u,
            converged=False,
            iterations=0,
            residual=residual,
            log_residual=log_res,
            area=float(np.sum(w * np.exp(log_density))),
            target_area=target,
            conservation_defect=abs(conserved - target) / scale,
            max_principle_gap=gap,
            log_density=log_density,
        )
