"""
截面基底與 Gram 矩陣

O(d) 的全純截面以 Fubini–Study 正規化表示：σ 在節點的值為
|σ|²_{h_FS^d} 的平方根並帶相位。內積為

    (σ, σ') = ∫ σ̄·σ'·μ，  μ = e^{−Φ}·Π χ_i^{2e_i}·ω_FS

其中 μ 以 Density 給出（光滑部分加上標記點冪次）。
"""

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.integrate import quad
from scipy.special import betainc, betaln, xlogy

from ..core.exceptions import NonIntegrableWeightError
from ..core.logging import get_logger
from ..discretization.grid import TWO_PI, RadialGrid
from ..geometry.model import PointKind, as_fraction
from ..geometry.weights import Density, MetricWeight

logger = get_logger(__name__)

BASIS_KINDS = ("monomial", "coherent")

# 黃金角
_GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))

# 指數下限，避免權重下溢為零
_LOG_FLOOR = -700.0


@dataclass(frozen=True)
class SectionBasis:
    """
    H⁰(ℙ¹, O(d)) 的基底

    Attributes:
        degree: 線叢次數 d ≥ 0
        kind: "monomial"（Z₀^{d−i}Z₁^i）或 "coherent"（d+1 個等面積螺旋點上的
            ⟨Z, P_j⟩^d）
    """

    degree: int
    kind: str = "monomial"

    def __post_init__(self) -> None:
        if self.degree < 0:
            raise ValueError(f"Section degree must be nonnegative, got {self.degree}")
        if self.kind not in BASIS_KINDS:
            raise ValueError(
                f"Unknown basis kind '{self.kind}', expected {BASIS_KINDS}"
            )

    @property
    def dimension(self) -> int:
        """h⁰(O(d)) = d + 1"""
        return self.degree + 1

    def spiral_points(self) -> np.ndarray:
        """
        等面積螺旋點的單位齊次座標 (a_j, b_j)

        面積座標 U_j = (j + ½)/(d + 1)，方位角以黃金角遞增。
        """
        n = self.dimension
        U = (np.arange(n) + 0.5) / n
        phi = np.mod(np.arange(n) * _GOLDEN_ANGLE, TWO_PI)
        return np.stack([np.sqrt(1.0 - U), np.sqrt(U) * np.exp(1j * phi)], axis=1)

    def evaluate(self, grid: RadialGrid) -> np.ndarray:
        """
        節點上的 Fubini–Study 正規化截面值

        Returns:
            np.ndarray: 形狀 (grid.size, d + 1) 的複數矩陣
        """
        d = self.degree
        U = grid.U[:, None]
        V = grid.V[:, None]
        phase = np.exp(1j * grid.node_phi)[:, None]
        if self.kind == "monomial":
            i = np.arange(d + 1, dtype=float)[None, :]
            log_mag = xlogy(0.5 * i, U) + xlogy(0.5 * (d - i), V)
            return np.exp(log_mag) * phase ** i
        points = self.spiral_points()
        # ⟨Ẑ, P̂_j⟩，Ẑ = (√V, √U·e^{iφ})
        inner = np.sqrt(V) * np.conj(points[:, 0])[None, :] + np.sqrt(U) * phase * (
            np.conj(points[:, 1])[None, :]
        )
        return inner ** d


@dataclass
class GramMatrix:
    """
    Hermitian Gram 矩陣 G_jk = ∫ σ̄_j σ_k μ

    Attributes:
        entries: (d+1)×(d+1) 複數矩陣
        basis: 截面基底
        measure: 內積所用的測度
        log_shift: 測度已乘上 e^{−log_shift}
    """

    entries: np.ndarray
    basis: SectionBasis
    measure: Density = field(repr=False)
    log_shift: float = 0.0

    @property
    def scale(self) -> np.ndarray:
        """Jacobi 縮放 D = √diag(G)"""
        return np.sqrt(np.real(np.diag(self.entries)))

    @property
    def scaled(self) -> np.ndarray:
        """D^{−1} G D^{−1}"""
        D = self.scale
        C = self.entries / np.outer(D, D)
        return 0.5 * (C + C.conj().T)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.scaled)

    def condition_number(self) -> float:
        """縮放後 Gram 的條件數"""
        lam = self.eigenvalues()
        if lam[0] <= 0:
            return float("inf")
        return float(lam[-1] / lam[0])

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.entries)[0])

    def off_diagonal_ratio(self) -> float:
        """max |C_jk|，j ≠ k"""
        C = self.scaled
        if C.shape[0] == 1:
            return 0.0
        off = C - np.diag(np.diag(C))
        return float(np.max(np.abs(off)))


def check_integrable(exponents: Dict[int, Any]) -> None:
    """
    整個截面空間可積的條件：每個標記點的冪次 > −1

    Raises:
        NonIntegrableWeightError: 命名第一個不可積的極點
    """
    for index, e in sorted(exponents.items()):
        if float(e) <= -1.0:
            raise NonIntegrableWeightError(
                f"Weight is not integrable at marked point {index} "
                f"(exponent {float(e):g} <= -1)",
                point=int(index),
                exponent=float(e),
            )


def measure_from_log(
    log_smooth: np.ndarray, exponents: Dict[int, Any]
) -> Tuple[Density, float]:
    """
    由對數光滑部分與冪次組成測度，並平移使光滑部分的最大值為 1

    Returns:
        Tuple[Density, float]: 測度與所用的平移量 c（測度已乘以 e^{−c}）

    Raises:
        NonIntegrableWeightError: 某冪次 ≤ −1
    """
    check_integrable(exponents)
    log_smooth = np.asarray(log_smooth, dtype=float)
    shift = float(np.max(log_smooth))
    smooth = np.exp(np.maximum(log_smooth - shift, _LOG_FLOOR))
    return Density(smooth, {int(k): float(v) for k, v in exponents.items()}), shift


def measure_from_weight(weight: MetricWeight, grid: RadialGrid) -> Density:
    """
    度量 h = e^{−φ}·h_FS^{deg} 對應的測度 e^{−φ}·ω_FS

    極點 c_i·log χ_i² 給出冪次 −c_i。
    """
    exponents = {i: -float(c) for i, c in weight.pole_coefficients.items()}
    check_integrable(exponents)
    return Density(np.exp(-weight.smooth(grid)), exponents)


def _pole_exponents(
    grid: RadialGrid, exponents: Dict[int, float]
) -> Tuple[float, float, Dict[int, float]]:
    model = grid.model
    e0 = 0.0
    e_inf = 0.0
    off_axis: Dict[int, float] = {}
    for index, e in exponents.items():
        kind = model.kind(index)
        if kind == PointKind.ZERO:
            e0 += e
        elif kind == PointKind.INFINITY:
            e_inf += e
        else:
            off_axis[index] = e
    return e0, e_inf, off_axis


def _radial_moments(
    grid: RadialGrid, degree: int, e0: float, e_inf: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    ∫ U^α V^β dU 於每個環胞與兩個極帽，α = q/2 + e0，β = d − q/2 + e∞

    Returns:
        環胞 (N_s, 2d+1)、0 極帽 (2d+1,)、∞ 極帽 (2d+1,)
    """
    q = np.arange(2 * degree + 1, dtype=float)
    a = q / 2.0 + e0 + 1.0
    b = degree - q / 2.0 + e_inf + 1.0
    beta = np.exp(betaln(a, b))[None, :]
    Uf = grid.U_faces[:, None]
    Vf = grid.V_faces[:, None]
    lower = betainc(a[None, :], b[None, :], Uf)
    upper = betainc(b[None, :], a[None, :], Vf)
    mid = 0.5 * (grid.s_faces[1:] + grid.s_faces[:-1])
    rings = np.where(
        (mid <= 0.0)[:, None],
        lower[1:] - lower[:-1],
        upper[:-1] - upper[1:],
    ) * beta
    cap_zero = (beta * lower[0])[0]
    cap_inf = (beta * upper[-1])[0]
    return rings, cap_zero, cap_inf


def _angular_moments(grid: RadialGrid, degree: int) -> np.ndarray:
    """∫ e^{imφ} dφ 於每個角度胞，m = −d..d"""
    m = np.arange(-degree, degree + 1, dtype=float)[None, :]
    lo = grid.phi_lo[:, None]
    hi = grid.phi_hi[:, None]
    out = np.empty((grid.n_phi, m.size), dtype=complex)
    nonzero = m != 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        values = (np.exp(1j * m * hi) - np.exp(1j * m * lo)) / (1j * m)
    out[:] = np.where(nonzero, values, (hi - lo) + 0j)
    return out


def _monomial_gram(
    basis: SectionBasis, measure: Density, grid: RadialGrid
) -> np.ndarray:
    d = basis.degree
    e0, e_inf, off_axis = _pole_exponents(grid, measure.exponents)
    sampled = measure.smooth(grid) * grid.singular_factor(off_axis)

    rings, cap_zero, cap_inf = _radial_moments(grid, d, e0, e_inf)
    angular = _angular_moments(grid, d)
    S = grid.tensor_view(sampled)
    # M[q, m] = Σ_r Σ_k R[r, q]·S[r, k]·A[k, m]
    M = rings.T @ S @ angular

    j = np.arange(d + 1)
    jj, kk = np.meshgrid(j, j, indexing="ij")
    G = M[jj + kk, kk - jj + d]
    caps = TWO_PI * (sampled[0] * cap_zero[2 * j] + sampled[-1] * cap_inf[2 * j])
    G = G + np.diag(caps)
    return np.asarray(G)


def _nodal_gram(
    basis: SectionBasis, measure: Density, grid: RadialGrid
) -> np.ndarray:
    E = basis.evaluate(grid)
    mass = measure.mass(grid)
    return np.asarray(E.conj().T @ (mass[:, None] * E))


def gram_matrix(
    basis: SectionBasis,
    weight: Union[Density, MetricWeight],
    grid: RadialGrid,
    log_shift: float = 0.0,
) -> GramMatrix:
    """
    Gram 矩陣

    單項式基底以每個胞上精確的徑向 beta 積分與角度積分組裝，光滑部分取節點值；
    0 與 ∞ 的冪次併入 beta 指數。相干態基底以節點求積組裝，
    使 Σ w·K·μ = dim 在離散層級精確成立。

    Args:
        basis: 截面基底
        weight: 測度（Density）或度量（MetricWeight，轉為 e^{−φ}·ω_FS）
        grid: 網格
        log_shift: 記錄於結果的測度平移量

    Returns:
        GramMatrix: Hermitian 化的 Gram 矩陣

    Raises:
        NonIntegrableWeightError: 某極點冪次 ≤ −1
    """
    if isinstance(weight, MetricWeight):
        measure = measure_from_weight(weight, grid)
    else:
        measure = weight
        check_integrable(measure.exponents)

    if basis.kind == "monomial":
        G = _monomial_gram(basis, measure, grid)
    else:
        G = _nodal_gram(basis, measure, grid)
    G = 0.5 * (G + G.conj().T)
    return GramMatrix(G, basis, measure, log_shift)


@dataclass(frozen=True)
class MembershipProbe:
    """冪次 p 的截斷積分 ∫_ε^1 r^{2p+1} dr 的增量"""

    exponent: float
    increments: Tuple[float, ...]
    convergent: bool


def _finiteness_probe(exponent: float) -> MembershipProbe:
    power = 2.0 * exponent + 1.0
    radii = [10.0 ** (-k) for k in range(1, 8)]
    increments: List[float] = []
    for hi, lo in zip(radii[:-1], radii[1:]):
        value, _ = quad(lambda x: np.exp((power + 1.0) * x), np.log(lo), np.log(hi))
        increments.append(float(value))
    ratios = [b / a for a, b in zip(increments[:-1], increments[1:]) if a > 0]
    convergent = bool(ratios) and max(ratios) < 1.0 - 1e-9
    return MembershipProbe(exponent, tuple(increments), convergent)


def multiplier_membership(
    vanishing_orders: Dict[int, int], exponents: Dict[int, Any]
) -> bool:
    """
    多重子理想判定：|σ|²·μ 在每個標記點局部可積

    精確判定為 ord_p(σ) + e_p > −1（有理數比較），並以截斷徑向積分的
    增量衰減交叉檢查。

    Args:
        vanishing_orders: 標記點索引 → σ 的消失階（未列出為 0）
        exponents: 標記點索引 → 權重冪次 e_p

    Returns:
        bool: σ 是否屬於多重子理想
    """
    member = True
    for index, e in exponents.items():
        total = Fraction(vanishing_orders.get(index, 0)) + as_fraction(e)
        exact = total > -1
        probe = _finiteness_probe(float(total))
        if probe.convergent != exact:
            logger.warning(
                "Quadrature finiteness probe disagrees with exact test",
                point=index,
                exponent=str(total),
                probe=probe.convergent,
            )
        member &= exact
    return member
