"""
Bergman 核動力系統

內層 ℓ 迴圈：K_ℓ 為 A + ℓ·a(K_X+D) 在度量 K_{ℓ−1}^{−1}·(漂移包) 下的 Bergman 核，
外層 m 迴圈以 K_m 的縮放極限取代漂移權重。所有核以相對於 h_FS 的對數形式保存，
階乘縮放一律在對數空間計算。
"""

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import gammaln

from ..core.config import BergmanSettings
from ..core.exceptions import (
    BergmanError,
    ClassMismatchError,
    DegreeBookkeepingError,
    NonIntegrableWeightError,
    NotBigError,
)
from ..core.logging import get_logger
from ..discretization.grid import TWO_PI, RadialGrid, grid_for_pair
from ..geometry.model import (
    CANONICAL_DEGREE,
    LogPair,
    QLineBundle,
    zariski_decompose,
)
from ..geometry.weights import Density, MetricWeight
from ..solvers.ma_solver import require_klt
from ..solvers.ricci_iteration import IterationTrace, area_recursion
from .kernels import KernelResult, bergman_density
from .sections import SectionBasis, check_integrable, gram_matrix, measure_from_log

logger = get_logger(__name__)

ESTIMATORS = ("ratio", "root")

# 縮放極限至少需要的內層狀態數
MIN_FIT_STATES = 4


@dataclass(frozen=True)
class DriftPack:
    """
    漂移包 (h_P·h_{σ_N})^{a−1}·h_{σ_D} 或光滑情形的 h₀^{t}·h_L

    Attributes:
        log_smooth: 光滑部分的對數（相對於 ω_FS 的測度因子）
        exponents: 標記點冪次
        degree: 包所帶的線叢次數（每步 K_X 之外的部分）
    """

    log_smooth: np.ndarray = field(repr=False)
    exponents: Dict[int, float]
    degree: Fraction

    def log_nodal(self, grid: RadialGrid) -> np.ndarray:
        check_integrable(self.exponents)
        return self.log_smooth + np.log(grid.singular_factor(self.exponents))


@dataclass(frozen=True)
class BergmanSystem:
    """
    雙重迭代的資料

    seed_weight 為 c^{(0)}：奇異情形為 a·φ_P，光滑情形為 ω₀ 的勢 φ₀。
    第 m 輪的漂移包為 static_log − t·c^{(m−1)}。
    """

    grid: RadialGrid
    a: int
    kappa: Fraction
    t: Fraction
    static_log: np.ndarray = field(repr=False)
    exponents: Dict[int, float]
    previous_weight: np.ndarray = field(repr=False)
    twist: MetricWeight
    m: int = 1
    label: str = "singular"

    @classmethod
    def singular(
        cls,
        pair: LogPair,
        reference: Optional[MetricWeight] = None,
        a: Optional[int] = None,
        *,
        grid: Optional[RadialGrid] = None,
        twist: Optional[MetricWeight] = None,
        settings: Optional[BergmanSettings] = None,
    ) -> "BergmanSystem":
        """
        KLT 對的系統

        Args:
            pair: KLT 對
            reference: h_P 的權重（預設為 FS 冪）
            a: 使 a·D 為整係數的正整數（預設為 D 的分母）
            grid: 網格
            twist: 豐沛扭轉 (A, h_A)（預設為 FS 度量的 O(twist_degree)）
            settings: Bergman 配置

        Raises:
            InvalidDivisorError: LC 或不合法的對
            NotBigError: deg(K_X + D) ≤ 0
            ClassMismatchError: reference 次數不是 deg(K_X + D)
            DegreeBookkeepingError: a 無法消去 D 的分母
        """
        require_klt(pair)
        settings = settings or BergmanSettings()
        a = pair.a if a is None else a
        if a < 1 or a % pair.a != 0:
            raise DegreeBookkeepingError(
                f"a = {a} does not clear the denominators of D ({pair.a})"
            )
        grid = grid or grid_for_pair(pair)
        reference = reference or MetricWeight(None, {}, pair.log_canonical)
        if reference.degree != pair.degree:
            raise ClassMismatchError(
                f"Reference weight has degree {reference.degree}, "
                f"expected {pair.degree}"
            )
        twist = twist or MetricWeight(None, {}, QLineBundle(settings.twist_degree))
        system = cls(
            grid=grid,
            a=a,
            kappa=pair.degree,
            t=Fraction(a - 1, a),
            static_log=np.zeros(grid.size),
            exponents={i: -float(d) for i, d in pair.divisor.entries},
            previous_weight=a * reference.smooth(grid),
            twist=twist,
            label="singular",
        )
        system.check_bookkeeping()
        return system

    @classmethod
    def smooth(
        cls,
        grid: RadialGrid,
        drift_weight: MetricWeight,
        omega0: MetricWeight,
        a: int,
        *,
        twist: Optional[MetricWeight] = None,
        settings: Optional[BergmanSettings] = None,
    ) -> "BergmanSystem":
        """
        光滑漂移 (L, h_L) 的系統，K_X + L 為豐沛

        ω₀ 的次數必須是 a·deg(K_X + L)，使每一輪的類保持不變。

        Raises:
            NotBigError: deg(K_X + L) ≤ 0
            DegreeBookkeepingError: ω₀ 的次數不符或 h_L 帶有極點
        """
        settings = settings or BergmanSettings()
        kappa = CANONICAL_DEGREE + drift_weight.degree
        if kappa <= 0:
            raise NotBigError(f"deg(K_X + L) = {kappa} is not positive", degree=kappa)
        if drift_weight.pole_coefficients:
            raise DegreeBookkeepingError("Smooth drift weight must not carry poles")
        if omega0.degree != a * kappa:
            raise DegreeBookkeepingError(
                f"deg ω₀ = {omega0.degree} but the fixed class needs {a * kappa}"
            )
        twist = twist or MetricWeight(None, {}, QLineBundle(settings.twist_degree))
        system = cls(
            grid=grid,
            a=a,
            kappa=kappa,
            t=Fraction(a - 1, a),
            static_log=-drift_weight.smooth(grid),
            exponents={},
            previous_weight=omega0.smooth(grid),
            twist=twist,
            label="smooth",
        )
        system.check_bookkeeping()
        return system

    @property
    def step_degree(self) -> Fraction:
        """每個內層步增加的次數 a·κ"""
        return self.a * self.kappa

    @property
    def pack(self) -> DriftPack:
        return DriftPack(
            log_smooth=self.static_log - float(self.t) * self.previous_weight,
            exponents=dict(self.exponents),
            degree=self.step_degree - CANONICAL_DEGREE,
        )

    def bundle_degree(self, ell: int) -> int:
        """deg(A + ℓ·a·κ)"""
        degree = self.twist.degree + ell * self.step_degree
        if degree.denominator != 1 or degree < 0:
            raise DegreeBookkeepingError(
                f"Bundle degree {degree} at ell = {ell} is not a nonnegative integer"
            )
        return int(degree)

    def check_bookkeeping(self) -> None:
        if self.step_degree.denominator != 1:
            raise DegreeBookkeepingError(
                f"a·deg = {self.step_degree} is not an integer (a = {self.a})"
            )
        twist_degree = self.twist.degree
        if twist_degree.denominator != 1 or twist_degree < 0:
            raise DegreeBookkeepingError(
                f"Ample twist degree {twist_degree} must be a nonnegative integer"
            )
        if self.twist.pole_coefficients:
            raise DegreeBookkeepingError("Ample twist weight must be smooth")

    def advance(self, limit: "ScaledLimit") -> "BergmanSystem":
        """下一輪：以 K_m 的極限權重取代漂移"""
        return replace(self, previous_weight=limit.weight_potential, m=self.m + 1)


@dataclass
class BergmanSystemState:
    """內層第 ℓ 步的狀態"""

    ell: int
    m: int
    degree: int
    kernel: KernelResult = field(repr=False)
    integral: float
    holder_bound: float
    scaled_integral: float
    scaled_bound: float
    trace_defect: float

    @property
    def dimension(self) -> int:
        return self.degree + 1

    @property
    def log_kernel(self) -> np.ndarray:
        return self.kernel.log_kernel

    @property
    def weight(self) -> MetricWeight:
        """h_ℓ = K_ℓ^{−1}"""
        return MetricWeight(self.log_kernel, {}, QLineBundle(self.degree))

    @property
    def holder_ok(self) -> bool:
        return self.integral <= self.holder_bound * (1.0 + 1e-10)

    def row(self) -> Dict[str, Any]:
        return {
            "m": self.m,
            "ell": self.ell,
            "degree": self.degree,
            "dim": self.dimension,
            "integral": self.integral,
            "holder_bound": self.holder_bound,
            "scaled_integral": self.scaled_integral,
            "scaled_bound": self.scaled_bound,
            "condition": self.kernel.condition,
            "fallback": self.kernel.used_fallback,
            "path_discrepancy": self.kernel.path_discrepancy,
            "trace_defect": self.trace_defect,
        }


@dataclass
class InnerRun:
    system: BergmanSystem
    log_twist: np.ndarray = field(repr=False)
    states: List[BergmanSystemState] = field(default_factory=list)

    @property
    def holder_ok(self) -> bool:
        return all(s.holder_ok for s in self.states)

    def rows(self) -> List[Dict[str, Any]]:
        return [s.row() for s in self.states]


def run_inner(
    system: BergmanSystem,
    ell_max: Optional[int] = None,
    *,
    settings: Optional[BergmanSettings] = None,
) -> InnerRun:
    """
    內層 Bergman 動力系統

    log K_0 = ψ_A（扭轉的勢），第 ℓ 步的測度為 exp(漂移包 − log K_{ℓ−1})。
    每步記錄 ∫dV_ℓ，其中 dV_ℓ = (K_ℓ·h_A)^{1/ℓ}·(漂移包)，以及 Hölder 鏈上界
    (Π_{k≤ℓ} dim_k)^{1/ℓ} 與縮放積分 (ℓ!)^{−1/ℓ}∫dV_ℓ。

    Args:
        system: 系統資料（含外層輪次 m）
        ell_max: 內層步數
        settings: Bergman 配置

    Returns:
        InnerRun: 各 ℓ 的狀態

    Raises:
        NonIntegrableWeightError: 漂移包在某標記點不可積
        DegreeBookkeepingError: 次數記帳錯誤
        BergmanError: Gram 分解失敗
    """
    settings = settings or BergmanSettings()
    ell_max = settings.ell_max if ell_max is None else ell_max
    if ell_max < 1:
        raise ValueError(f"ell_max must be positive, got {ell_max}")
    grid = system.grid
    pack = system.pack
    pack_log_nodal = pack.log_nodal(grid)
    log_twist = system.twist.smooth(grid).copy()

    run = InnerRun(system=system, log_twist=log_twist)
    log_k = log_twist
    log_dims = 0.0
    scaled_bound = float(system.step_degree)
    for ell in range(1, ell_max + 1):
        degree = system.bundle_degree(ell)
        basis = SectionBasis(degree, kind=settings.basis)
        measure, shift = measure_from_log(pack.log_smooth - log_k, pack.exponents)
        gram = gram_matrix(basis, measure, grid, log_shift=shift)
        kernel = bergman_density(basis, gram, grid, settings=settings)
        log_k = kernel.log_kernel

        log_dims += float(np.log(basis.dimension))
        log_dv = (log_k - log_twist) / ell + pack_log_nodal
        integral = float(np.sum(grid.weights * np.exp(log_dv)))
        trace = kernel.trace_integral(gram, grid)
        state = BergmanSystemState(
            ell=ell,
            m=system.m,
            degree=degree,
            kernel=kernel,
            integral=integral,
            holder_bound=float(np.exp(log_dims / ell)),
            scaled_integral=float(
                np.exp(np.log(integral) - gammaln(ell + 1) / ell)
            ),
            scaled_bound=scaled_bound,
            trace_defect=abs(trace - basis.dimension) / basis.dimension,
        )
        run.states.append(state)
        if not state.holder_ok:
            logger.warning(
                "Hölder chain bound violated",
                ell=ell,
                integral=integral,
                bound=state.holder_bound,
            )

    logger.debug(
        "Inner Bergman run finished",
        system=system.label,
        m=system.m,
        ell_max=ell_max,
        holder_ok=run.holder_ok,
        final_scaled=run.states[-1].scaled_integral,
    )
    return run


@dataclass
class ScaledLimit:
    """
    K_m 的縮放極限

    c0 為節點上的 lim (K_ℓ/ℓ!)^{1/ℓ} 對數估計；極限體積形式為
    ω = 2π·K_∞·(漂移包)，即 h_m = K_m^{−1}/(2π)。
    """

    grid: RadialGrid = field(repr=False)
    m: int
    estimator: str
    ells: Tuple[int, ...]
    c0: np.ndarray = field(repr=False)
    c1: np.ndarray = field(repr=False)
    residual: float
    error_estimate: float
    low_confidence: bool
    pack_log_nodal: np.ndarray = field(repr=False)
    exponents: Dict[int, float] = field(default_factory=dict)
    expected_area: float = float("nan")

    @property
    def weight_potential(self) -> np.ndarray:
        """下一輪漂移使用的 c^{(m)} = log 2π + c0"""
        return np.log(TWO_PI) + self.c0

    @property
    def log_density(self) -> np.ndarray:
        return self.weight_potential + self.pack_log_nodal

    @property
    def density(self) -> Density:
        return Density.from_log(self.grid, self.log_density, self.exponents)

    @property
    def area(self) -> float:
        return float(np.sum(self.grid.weights * np.exp(self.log_density)))

    def compare(
        self, reference_log_density: np.ndarray, mask: Optional[np.ndarray] = None
    ) -> float:
        """與參考對數密度的 sup 差"""
        diff = np.abs(self.log_density - np.asarray(reference_log_density))
        if mask is not None:
            diff = diff[mask]
        return float(np.max(diff))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "m": self.m,
            "estimator": self.estimator,
            "ells": list(self.ells),
            "residual": self.residual,
            "error_estimate": self.error_estimate,
            "low_confidence": self.low_confidence,
            "area": self.area,
            "expected_area": self.expected_area,
        }


def _estimator_samples(run: InnerRun, estimator: str) -> Tuple[np.ndarray, np.ndarray]:
    ells = np.array([s.ell for s in run.states], dtype=float)
    logs = np.stack([s.log_kernel for s in run.states])
    if estimator == "root":
        y = (logs - gammaln(ells + 1.0)[:, None]) / ells[:, None]
        return ells, y
    previous = np.vstack([run.log_twist[None, :], logs[:-1]])
    y = logs - previous - np.log(ells)[:, None]
    return ells, y


def _fit(ells: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
    X = np.column_stack([np.ones_like(ells), 1.0 / ells])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    residual = float(np.max(np.abs(X @ coef - y)))
    return coef[0], coef[1], residual


def scaled_limit(
    run: InnerRun,
    estimator: Optional[str] = None,
    *,
    settings: Optional[BergmanSettings] = None,
) -> ScaledLimit:
    """
    以 c₀ + c₁/ℓ 模型擬合 (K_ℓ/ℓ!)^{1/ℓ} 的極限

    Args:
        run: 內層結果（至少 4 個狀態）
        estimator: "ratio"（相鄰比值）或 "root"（ℓ 次根）
        settings: Bergman 配置（fit_min_ell、fit_tolerance）

    Returns:
        ScaledLimit: 極限與擬合診斷；殘差或外插誤差超過 fit_tolerance 時標記為低信心

    Raises:
        BergmanError: 狀態不足或估計器未知
    """
    settings = settings or BergmanSettings()
    estimator = estimator or settings.estimator
    if estimator not in ESTIMATORS:
        raise BergmanError(f"Unknown scaled-limit estimator: {estimator}")
    if len(run.states) < MIN_FIT_STATES:
        raise BergmanError(
            f"Scaled limit needs at least {MIN_FIT_STATES} inner states, "
            f"got {len(run.states)}"
        )

    ells, y = _estimator_samples(run, estimator)
    selected = ells >= settings.fit_min_ell
    if np.count_nonzero(selected) < MIN_FIT_STATES:
        selected = np.zeros_like(selected)
        selected[-MIN_FIT_STATES:] = True
    ells, y = ells[selected], y[selected]

    c0, c1, residual = _fit(ells, y)
    half = max(len(ells) // 2, 2)
    c0_half, _, _ = _fit(ells[-half:], y[-half:])
    error = float(np.max(np.abs(c0 - c0_half)))
    low_confidence = residual > settings.fit_tolerance or error > settings.fit_tolerance

    system = run.system
    limit = ScaledLimit(
        grid=system.grid,
        m=system.m,
        estimator=estimator,
        ells=tuple(int(e) for e in ells),
        c0=c0,
        c1=c1,
        residual=residual,
        error_estimate=error,
        low_confidence=low_confidence,
        pack_log_nodal=system.pack.log_nodal(system.grid),
        exponents=dict(system.exponents),
        expected_area=float(TWO_PI * system.step_degree),
    )
    if low_confidence:
        logger.warning(
            "Scaled Bergman limit fit is low-confidence",
            m=system.m,
            estimator=estimator,
            residual=residual,
            error=error,
        )
    return limit


@dataclass
class OuterRun:
    """外層 m 迴圈的結果"""

    limits: List[ScaledLimit] = field(default_factory=list)
    inner_runs: List[InnerRun] = field(default_factory=list, repr=False)
    areas: List[Fraction] = field(default_factory=list)
    area_errors: List[float] = field(default_factory=list)
    ricci_gaps: List[float] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.limits)

    @property
    def final(self) -> ScaledLimit:
        return self.limits[-1]

    def rows(self) -> List[Dict[str, Any]]:
        out = []
        for run in self.inner_runs:
            out.extend(run.rows())
        return out

    def outer_rows(self) -> List[Dict[str, Any]]:
        out = []
        for index, limit in enumerate(self.limits):
            row = {
                "m": limit.m,
                "area": limit.area,
                "expected_area": float(TWO_PI * self.areas[index + 1]),
                "area_error": self.area_errors[index],
                "fit_residual": limit.residual,
                "error_estimate": limit.error_estimate,
                "low_confidence": limit.low_confidence,
            }
            if index < len(self.ricci_gaps):
                row["ricci_gap"] = self.ricci_gaps[index]
            out.append(row)
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {
            "steps": self.steps,
            "areas": [str(a) for a in self.areas],
            "area_errors": self.area_errors,
            "ricci_gaps": self.ricci_gaps,
            "limits": [limit.to_dict() for limit in self.limits],
        }


def run_outer(
    pair_or_system: Union[LogPair, BergmanSystem],
    a: Optional[int] = None,
    ell_max: Optional[int] = None,
    m_max: int = 3,
    *,
    reference: Optional[MetricWeight] = None,
    grid: Optional[RadialGrid] = None,
    trace: Optional[IterationTrace] = None,
    mask: Optional[np.ndarray] = None,
    settings: Optional[BergmanSettings] = None,
) -> OuterRun:
    """
    外層迭代：每輪以 h_m = K_m^{−1}/(2π) 取代漂移權重

    面積與 Ricci 迭代的仿射遞迴比較；給定 trace 時逐輪比較對數密度。

    Args:
        pair_or_system: KLT 對或已建立的系統
        a: 見 BergmanSystem.singular
        ell_max: 內層步數
        m_max: 外層輪數
        reference: h_P 的權重
        grid: 網格
        trace: 同一資料上的 Ricci 迭代軌跡
        mask: 比較時使用的正則集遮罩
        settings: Bergman 配置

    Returns:
        OuterRun: 各輪的縮放極限
    """
    settings = settings or BergmanSettings()
    if isinstance(pair_or_system, BergmanSystem):
        system = pair_or_system
    else:
        system = BergmanSystem.singular(
            pair_or_system, reference, a, grid=grid, settings=settings
        )
    if trace is not None and trace.grid is not system.grid:
        raise BergmanError("Ricci trace must live on the same grid as the system")

    outer = OuterRun()
    outer.areas = area_recursion(
        system.step_degree, system.kappa, system.t, m_max
    )
    for m in range(1, m_max + 1):
        inner = run_inner(system, ell_max, settings=settings)
        limit = scaled_limit(inner, settings=settings)
        outer.inner_runs.append(inner)
        outer.limits.append(limit)

        expected = float(TWO_PI * outer.areas[m])
        outer.area_errors.append(abs(limit.area - expected) / expected)
        if trace is not None and m <= trace.steps:
            outer.ricci_gaps.append(limit.compare(trace.log_densities[m - 1], mask))
        logger.info(
            "Outer Bergman step",
            m=m,
            area=limit.area,
            expected_area=expected,
            ricci_gap=outer.ricci_gaps[-1] if len(outer.ricci_gaps) == m else None,
        )
        system = system.advance(limit)
    return outer


# ----------------------------------------------------------------------
# 體積不變量
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class VolumeInvariant:
    """
    μ(X, K_X+D)

    probes 為 (ℓ, dim H⁰(ℓa(K+D)), dim/(aℓ)) 的精確值。
    """

    mu: Fraction
    a: int
    probes: Tuple[Tuple[int, int, Fraction], ...]
    p_degree: Fraction
    stabilized: bool

    @property
    def matches_zariski(self) -> bool:
        return self.mu == self.p_degree

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mu": str(self.mu),
            "a": self.a,
            "p_degree": str(self.p_degree),
            "stabilized": self.stabilized,
            "probes": [[ell, dim, str(e)] for ell, dim, e in self.probes],
        }


def _h0(degree: Fraction) -> int:
    if degree.denominator != 1:
        raise DegreeBookkeepingError(f"Degree {degree} is not an integer")
    return max(int(degree) + 1, 0)


def volume_mu(
    pair: LogPair,
    ells: Sequence[int] = (1, 2, 4, 8, 16, 32),
    a: Optional[int] = None,
) -> VolumeInvariant:
    """
    以精確維數計算 μ = lim n!·a^{−n}·dim H⁰(ℓa(K+D))/ℓⁿ（n = 1）

    兩個最大的 ℓ 做 Richardson 外插消去 1/ℓ 項；曲線上結果是精確的。
    """
    if len(ells) < 2:
        raise ValueError("volume_mu needs at least two probe values")
    a = pair.a if a is None else a
    if a % pair.a != 0:
        raise DegreeBookkeepingError(
            f"a = {a} does not clear the denominators of D ({pair.a})"
        )
    kappa = pair.degree
    probes = []
    for ell in sorted(set(int(e) for e in ells)):
        dim = _h0(ell * a * kappa)
        probes.append((ell, dim, Fraction(dim, a * ell)))

    if kappa > 0:
        (l1, _, e1), (l2, _, e2) = probes[-2], probes[-1]
        mu = (l2 * e2 - l1 * e1) / (l2 - l1)
    else:
        mu = Fraction(0)
    gaps = [abs(e - mu) for _, _, e in probes]
    stabilized = all(b <= g for g, b in zip(gaps[:-1], gaps[1:]))
    zariski = zariski_decompose(pair)
    return VolumeInvariant(
        mu=mu,
        a=a,
        probes=tuple(probes),
        p_degree=zariski.p_degree,
        stabilized=stabilized,
    )


# ----------------------------------------------------------------------
# 單一系統的反例
# ----------------------------------------------------------------------


@dataclass
class NaiveDemoReport:
    """單一系統 A + ℓK_X，第 a 步乘上 |σ_D|^{−2a} 的結果"""

    a: int
    steps: List[Dict[str, Any]] = field(default_factory=list)
    failed: bool = False
    failed_step: Optional[int] = None
    point: Optional[int] = None
    exponent: Optional[float] = None
    message: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            "a": self.a,
            "steps": self.steps,
            "failed": self.failed,
            "failed_step": self.failed_step,
            "point": self.point,
            "exponent": self.exponent,
            "message": self.message,
        }


def naive_single_system_demo(
    pair: LogPair,
    grid: Optional[RadialGrid] = None,
    settings: Optional[BergmanSettings] = None,
) -> NaiveDemoReport:
    """
    不拆分漂移的單一系統

    每步加上 K_X；第 a 步再張量 O(aD) 並帶權重 |σ_D|^{−2a}，
    此時冪次 −a·d_i ≤ −1，權重不可積。報告記錄失敗的步數與極點。
    """
    require_klt(pair)
    settings = settings or BergmanSettings()
    grid = grid or grid_for_pair(pair)
    a = pair.a
    report = NaiveDemoReport(a=a)

    degree = 2 * a + 2
    log_k = np.zeros(grid.size)
    for step in range(1, a + 1):
        degree += int(CANONICAL_DEGREE)
        exponents: Dict[int, float] = {}
        if step == a:
            degree += int(a * pair.divisor.degree)
            exponents = {i: -float(a * d) for i, d in pair.divisor.entries}
        try:
            measure, shift = measure_from_log(-log_k, exponents)
        except NonIntegrableWeightError as e:
            report.failed = True
            report.failed_step = step
            report.point = e.point
            report.exponent = e.exponent
            report.message = str(e)
            logger.info(
                "Single-system Bergman construction breaks down",
                step=step,
                point=e.point,
                exponent=e.exponent,
            )
            break
        basis = SectionBasis(degree, kind=settings.basis)
        gram = gram_matrix(basis, measure, grid, log_shift=shift)
        kernel = bergman_density(basis, gram, grid, settings=settings)
        log_k = kernel.log_kernel
        report.steps.append(
            {
                "step": step,
                "degree": degree,
                "dim": basis.dimension,
                "trace": kernel.trace_integral(gram, grid),
            }
        )
    return report
