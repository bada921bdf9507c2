"""
Bergman 核

K(x) = Σ|σ_i(x)|² 對正交基底求和，等價於 Gram 逆矩陣在取值向量上的二次型。
兩條路徑（Cholesky 二次型、特徵分解正交基底）都計算並比較；
縮放後的 Gram 條件數超過門檻時改以 mpmath 高精度分解。
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence

import mpmath
import numpy as np
from scipy.linalg import cho_factor, eigh, solve_triangular

from ..core.config import BergmanSettings
from ..core.exceptions import BergmanError
from ..core.logging import get_logger
from ..discretization.grid import RadialGrid
from ..geometry.weights import Density
from .sections import GramMatrix, SectionBasis

logger = get_logger(__name__)

_TINY = 1e-300


@dataclass
class KernelResult:
    """
    Bergman 核在節點上的值

    Attributes:
        log_kernel: log K（相對於 h_FS^d），已還原測度平移
        basis: 截面基底
        condition: 縮放後 Gram 的條件數
        path_discrepancy: 兩條路徑的 max |log K_chol − log K_eig|
        used_fallback: 是否使用高精度分解
    """

    log_kernel: np.ndarray = field(repr=False)
    basis: SectionBasis
    condition: float
    path_discrepancy: float
    used_fallback: bool = False

    @property
    def density(self) -> Density:
        return Density(np.exp(self.log_kernel), {})

    def trace_integral(self, gram: GramMatrix, grid: RadialGrid) -> float:
        """∫ K·μ，應等於截面空間維數"""
        mass = gram.measure.mass(grid)
        return float(np.sum(mass * np.exp(self.log_kernel + gram.log_shift)))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "degree": self.basis.degree,
            "kind": self.basis.kind,
            "condition": self.condition,
            "path_discrepancy": self.path_discrepancy,
            "used_fallback": self.used_fallback,
        }


def _high_precision_inverse_factor(C: np.ndarray, dps: int) -> np.ndarray:
    """以 mpmath 計算 C = L·Lᴴ 的 L^{−1}"""
    n = C.shape[0]
    with mpmath.workdps(dps):
        A = mpmath.matrix(C.tolist())
        try:
            L = mpmath.cholesky(A)
        except ValueError as e:
            raise BergmanError(f"High-precision Cholesky failed: {e}") from e
        L_inv = mpmath.inverse(L)
        return np.array(
            [[complex(L_inv[i, j]) for j in range(n)] for i in range(n)],
            dtype=complex,
        )


def bergman_density(
    basis: SectionBasis,
    gram: GramMatrix,
    grid: RadialGrid,
    *,
    settings: Optional[BergmanSettings] = None,
    evaluation: Optional[np.ndarray] = None,
) -> KernelResult:
    """
    Bergman 核密度

    K(x) = eᵀ G^{−1} ē，e 為截面在 x 的取值向量。

    Args:
        basis: 截面基底
        gram: 該基底的 Gram 矩陣
        grid: 取值網格
        settings: Bergman 配置（條件數門檻、高精度位數）
        evaluation: 預先計算的取值矩陣

    Returns:
        KernelResult: 節點上的 log K 與診斷

    Raises:
        BergmanError: Gram 不正定且高精度分解失敗
    """
    settings = settings or BergmanSettings()
    E = basis.evaluate(grid) if evaluation is None else evaluation
    D = gram.scale
    if np.any(D <= 0):
        raise BergmanError("Gram matrix has a nonpositive diagonal entry")
    rhs = np.conj(E / D[None, :]).T
    C = gram.scaled

    lam, Q = eigh(C)
    condition = float(lam[-1] / lam[0]) if lam[0] > 0 else float("inf")

    k_eig: Optional[np.ndarray] = None
    if lam[0] > 0:
        Z = Q.conj().T @ rhs
        k_eig = np.sum(np.abs(Z) ** 2 / lam[:, None], axis=0)

    used_fallback = condition > settings.condition_threshold
    if used_fallback:
        logger.warning(
            "Gram matrix ill-conditioned; using high-precision factorization",
            degree=basis.degree,
            condition=condition,
            dps=settings.high_precision_dps,
        )
        L_inv = _high_precision_inverse_factor(C, settings.high_precision_dps)
        Y = L_inv @ rhs
    else:
        factor, lower = cho_factor(C, lower=True)
        Y = solve_triangular(factor, rhs, lower=lower)
    k_chol = np.sum(np.abs(Y) ** 2, axis=0)

    log_chol = np.log(np.maximum(k_chol, _TINY))
    discrepancy = (
        float(np.max(np.abs(log_chol - np.log(np.maximum(k_eig, _TINY)))))
        if k_eig is not None
        else float("nan")
    )
    return KernelResult(
        log_kernel=log_chol - gram.log_shift,
        basis=basis,
        condition=condition,
        path_discrepancy=discrepancy,
        used_fallback=used_fallback,
    )


def extremal_value(
    basis: SectionBasis,
    gram: GramMatrix,
    grid: RadialGrid,
    nodes: Sequence[int],
) -> np.ndarray:
    """
    極值性質：K(x) = max_{‖σ‖=1} |σ(x)|²

    對每個節點取 (ē·eᵀ, G) 的最大廣義特徵值，與核路徑無關。

    Args:
        basis: 截面基底
        gram: Gram 矩陣
        grid: 網格
        nodes: 節點索引

    Returns:
        np.ndarray: 各節點的 log max |σ(x)|²
    """
    D = gram.scale
    C = gram.scaled
    E = basis.evaluate(grid)[np.asarray(nodes, dtype=int)] / D[None, :]
    out = np.empty(len(nodes))
    for n, e in enumerate(E):
        A = np.outer(np.conj(e), e)
        top = eigh(A, C, eigvals_only=True)[-1]
        out[n] = np.log(max(float(top), _TINY)) - gram.log_shift
    return out
