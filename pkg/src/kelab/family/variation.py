"""
族的變分

底圓盤上的族：逐纖維求解典範 KE 密度，組成相對密度場，
並以 (w = log z, y) 座標中的離散 2×2 複 Hessian 檢驗多重次調和性。
"""

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from ..bergman.dynamics import BergmanSystem, run_inner
from ..core.config import (
    BergmanSettings,
    FamilySettings,
    GridSettings,
    LimitSettings,
    SolverSettings,
)
from ..core.exceptions import (
    DegreeBookkeepingError,
    InvalidDivisorError,
    KelabError,
    NotBigError,
)
from ..core.logging import get_logger
from ..discretization.grid import TWO_PI, ClusterSpec, RadialGrid, build_grid
from ..geometry.model import (
    CANONICAL_DEGREE,
    LogDivisor,
    LogPair,
    MarkedSphereModel,
    PairClass,
    QLineBundle,
    RationalLike,
    as_fraction,
    derived_cluster_exponent,
)
from ..geometry.weights import MetricWeight
from ..limits.lc_limit import lc_limit
from ..solvers.ma_solver import PerturbationSchedule, solve_canonical_KE_klt

logger = get_logger(__name__)

# 邊界報告使用的底圓盤外環（相對半徑）
BOUNDARY_BAND = 0.8


@dataclass(frozen=True)
class FamilySpec:
    """
    底圓盤上的標記點族

    靜態點固定，移動點為 p(y) = anchor + y；係數不隨 y 改變。
    moving = False 時 p(y) ≡ anchor（乘積族）。

    Attributes:
        static_points: 靜態標記點（None 為 ∞）
        static_coefficients: 靜態點的係數
        moving_coefficient: 移動點的係數
        anchor: 移動點在 y = 0 的位置
        base_radius: 底圓盤半徑
        base_nodes: 底方格每邊的節點數
        track_exclusion: 奇異軌跡的排除半徑
        moving: 是否移動
    """

    static_points: Tuple[Optional[complex], ...]
    static_coefficients: Tuple[Fraction, ...]
    moving_coefficient: Fraction
    anchor: complex = complex(-1.0)
    base_radius: float = 0.3
    base_nodes: int = 11
    track_exclusion: float = 0.05
    moving: bool = True

    def __post_init__(self) -> None:
        if len(self.static_points) != len(self.static_coefficients):
            raise InvalidDivisorError(
                "Every static point needs a coefficient",
                entry=(len(self.static_points), len(self.static_coefficients)),
            )
        object.__setattr__(
            self,
            "static_coefficients",
            tuple(as_fraction(c) for c in self.static_coefficients),
        )
        object.__setattr__(
            self, "moving_coefficient", as_fraction(self.moving_coefficient)
        )
        object.__setattr__(self, "anchor", complex(self.anchor))
        if self.base_nodes < 3 or self.base_nodes % 2 == 0:
            raise ValueError(
                f"Base grid needs an odd number of nodes >= 3, got {self.base_nodes}"
            )
        if self.base_radius <= 0:
            raise ValueError(f"Base radius must be positive, got {self.base_radius}")

    @classmethod
    def four_point(
        cls,
        coefficient: RationalLike = Fraction(5, 6),
        *,
        moving: bool = True,
        settings: Optional[FamilySettings] = None,
    ) -> "FamilySpec":
        """{0, 1, ∞} 加上 anchor + y，四點係數相同"""
        settings = settings or FamilySettings()
        c = as_fraction(coefficient)
        return cls(
            static_points=(0j, 1 + 0j, None),
            static_coefficients=(c, c, c),
            moving_coefficient=c,
            anchor=complex(settings.anchor),
            base_radius=settings.base_radius,
            base_nodes=settings.base_nodes,
            track_exclusion=settings.track_exclusion,
            moving=moving,
        )

    @property
    def moving_index(self) -> int:
        return len(self.static_points)

    @property
    def divisor(self) -> LogDivisor:
        coefficients = dict(enumerate(self.static_coefficients))
        coefficients[self.moving_index] = self.moving_coefficient
        return LogDivisor.from_mapping(coefficients)

    @property
    def classification(self) -> PairClass:
        return self.divisor.classification

    @property
    def expected_area(self) -> float:
        return float(TWO_PI * (self.divisor.degree + CANONICAL_DEGREE))

    @property
    def base_spacing(self) -> float:
        return 2.0 * self.base_radius / (self.base_nodes - 1)

    @property
    def base_axis(self) -> np.ndarray:
        return np.linspace(-self.base_radius, self.base_radius, self.base_nodes)

    def base_points(self) -> List[Tuple[int, int, complex]]:
        """底圓盤內的節點 (i, j, y)，y = axis[i] + i·axis[j]"""
        axis = self.base_axis
        limit = self.base_radius * (1.0 + 1e-9)
        out = []
        for i, re in enumerate(axis):
            for j, im in enumerate(axis):
                y = complex(re, im)
                if abs(y) <= limit:
                    out.append((i, j, y))
        return out

    def moving_point(self, y: complex) -> complex:
        return self.anchor + y if self.moving else self.anchor

    def model(self, y: complex = 0j) -> MarkedSphereModel:
        return MarkedSphereModel(self.static_points + (self.moving_point(y),))

    def pair(self, y: complex = 0j) -> LogPair:
        return LogPair(self.model(y), self.divisor)

    def is_regular(self, y: complex) -> bool:
        """y ∈ Y₀：纖維標記點相異且纖維對為對數一般型"""
        try:
            pair = self.pair(y)
        except InvalidDivisorError:
            return False
        return pair.classification != PairClass.INVALID and pair.degree > 0

    def require_regular(self) -> None:
        """
        Raises:
            InvalidDivisorError: 某個底節點的纖維點相撞或係數不合法
            NotBigError: 纖維對不是對數一般型
        """
        if self.classification == PairClass.INVALID:
            raise InvalidDivisorError(
                "Family coefficients must lie in (0, 1]",
                entry=self.divisor.to_dict(),
            )
        if self.divisor.degree + CANONICAL_DEGREE <= 0:
            raise NotBigError(
                f"Fiber pairs have deg(K_X + D) = "
                f"{self.divisor.degree + CANONICAL_DEGREE}",
                degree=self.divisor.degree + CANONICAL_DEGREE,
            )
        for _, _, y in self.base_points():
            self.model(y)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "static_points": [
                "inf" if p is None else [p.real, p.imag] for p in self.static_points
            ],
            "static_coefficients": [str(c) for c in self.static_coefficients],
            "moving_coefficient": str(self.moving_coefficient),
            "anchor": [self.anchor.real, self.anchor.imag],
            "base_radius": self.base_radius,
            "base_nodes": self.base_nodes,
            "track_exclusion": self.track_exclusion,
            "moving": self.moving,
        }


def family_grid(
    spec: FamilySpec,
    resolution: Optional[int] = None,
    *,
    settings: Optional[GridSettings] = None,
) -> RadialGrid:
    """
    族共用的 x 網格

    靜態點依係數做冪律叢集；移動點的整條軌跡以均勻加密區塊覆蓋。
    """
    settings = settings or GridSettings()
    coefficients = {i: float(c) for i, c in enumerate(spec.static_coefficients)}
    coefficients[spec.moving_index] = float(spec.moving_coefficient)
    exponents = {
        i: derived_cluster_exponent(c) for i, c in enumerate(spec.static_coefficients)
    }
    exponents[spec.moving_index] = 1
    track = ClusterSpec(
        center=spec.anchor,
        exponent=1,
        width=spec.base_radius + 2.0 * spec.track_exclusion,
        rings=2 * settings.cluster_rings,
    )
    return build_grid(
        spec.model(0j),
        resolution,
        exponents,
        coefficients=coefficients,
        settings=settings,
        extra_clusters=(track,),
    )


@dataclass
class FiberSolution:
    """單一纖維的解"""

    y: complex
    log_density: Optional[np.ndarray] = field(repr=False)
    area: float
    converged: bool
    error: Optional[str] = None


def solve_fiber(
    spec: FamilySpec,
    y: complex,
    grid: RadialGrid,
    tol: Optional[float] = None,
    solver_settings: Optional[SolverSettings] = None,
    limit_settings: Optional[LimitSettings] = None,
    t_values: Optional[Sequence[Any]] = None,
) -> FiberSolution:
    """
    在固定 x 網格上求解纖維 y 的典範密度

    KLT 纖維直接求解；LC 纖維走 t ↑ 1 極限。錯誤轉為失敗的 FiberSolution。
    """
    try:
        pair = spec.pair(y)
        fiber_grid = grid.with_model(pair.model)
        if pair.classification == PairClass.LC:
            limit = lc_limit(
                pair,
                t_values,
                fiber_grid,
                settings=limit_settings,
                solver_settings=solver_settings,
                probe=False,
            )
            converged = all(r.converged for r in limit.sweep.reports)
            return FiberSolution(y, limit.log_density, limit.area, converged)
        report = solve_canonical_KE_klt(
            pair,
            PerturbationSchedule.direct(),
            fiber_grid,
            tol,
            settings=solver_settings,
        ).final
        return FiberSolution(y, report.log_density, report.area, report.converged)
    except KelabError as e:
        return FiberSolution(y, None, float("nan"), False, str(e))


@dataclass
class RelativeDensityField:
    """
    (x, y) 乘積網格上的相對對數密度 log(dμ_can,y / ω_FS)

    log_density[k] 對應 base[k] = (i, j, y)；失敗的纖維為 NaN 列。
    """

    spec: FamilySpec
    grid: RadialGrid = field(repr=False)
    base: List[Tuple[int, int, complex]]
    log_density: np.ndarray = field(repr=False)
    areas: np.ndarray
    failed: List[complex] = field(default_factory=list)
    errors: Dict[complex, str] = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return not self.failed

    @property
    def expected_area(self) -> float:
        return self.spec.expected_area

    @property
    def area_defect(self) -> float:
        """已解纖維面積的最大相對誤差"""
        solved = self.areas[np.isfinite(self.areas)]
        if solved.size == 0:
            return float("nan")
        return float(np.max(np.abs(solved / self.expected_area - 1.0)))

    @property
    def areas_nonnegative(self) -> bool:
        solved = self.areas[np.isfinite(self.areas)]
        return bool(np.all(solved >= 0.0))

    def position(self, y: complex) -> int:
        for k, (_, _, value) in enumerate(self.base):
            if abs(value - y) < 1e-12:
                return k
        raise KeyError(y)

    def fiber(self, y: complex) -> np.ndarray:
        return np.asarray(self.log_density[self.position(y)])

    def fiber_grid(self, y: complex) -> RadialGrid:
        return self.grid.with_model(self.spec.model(y))

    def base_rows(self) -> List[Dict[str, Any]]:
        return [
            {
                "i": i,
                "j": j,
                "y_re": y.real,
                "y_im": y.imag,
                "area": float(self.areas[k]),
                "failed": y in self.failed,
            }
            for k, (i, j, y) in enumerate(self.base)
        ]

    def rows(self) -> List[Dict[str, Any]]:
        """(x 節點, y 節點, 對數密度) 的稠密表；失敗纖維的密度為 NaN"""
        s = self.grid.node_s
        phi = self.grid.node_phi
        out = []
        for k, (i, j, y) in enumerate(self.base):
            values = self.log_density[k]
            for node in range(self.grid.size):
                out.append(
                    {
                        "i": i,
                        "j": j,
                        "y_re": y.real,
                        "y_im": y.imag,
                        "node": node,
                        "s": float(s[node]),
                        "phi": float(phi[node]),
                        "log_density": float(values[node]),
                    }
                )
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {
            "spec": self.spec.to_dict(),
            "fibers": len(self.base),
            "complete": self.complete,
            "failed": [[y.real, y.imag] for y in self.failed],
            "expected_area": self.expected_area,
            "area_defect": self.area_defect,
            "areas_nonnegative": self.areas_nonnegative,
        }


def solve_family(
    spec: FamilySpec,
    grid: Optional[RadialGrid] = None,
    tol: Optional[float] = None,
    *,
    resolution: Optional[int] = None,
    grid_settings: Optional[GridSettings] = None,
    solver_settings: Optional[SolverSettings] = None,
    limit_settings: Optional[LimitSettings] = None,
    t_values: Optional[Sequence[Any]] = None,
    n_jobs: int = 1,
) -> RelativeDensityField:
    """
    逐纖維求解並組成相對密度場

    x 網格在所有纖維間固定；標記點集合相同的纖維只求解一次。

    Args:
        spec: 族
        grid: 共用 x 網格（預設 family_grid）
        tol: 殘差容許值
        resolution: 網格解析度
        grid_settings: 網格配置
        solver_settings: 求解器配置
        limit_settings: LC 纖維的極限配置
        t_values: LC 纖維的 t 排程
        n_jobs: 並行工作數

    Returns:
        RelativeDensityField: 失敗纖維列於 failed

    Raises:
        InvalidDivisorError: 底圓盤內的纖維點相撞
        NotBigError: 纖維對不是對數一般型
    """
    spec.require_regular()
    grid = grid or family_grid(spec, resolution, settings=grid_settings)
    base = spec.base_points()

    # 乘積族的所有纖維共用同一組標記點
    distinct: Dict[Tuple[Any, ...], complex] = {}
    for _, _, y in base:
        distinct.setdefault(spec.model(y).points, y)
    solutions = Parallel(n_jobs=n_jobs)(
        delayed(solve_fiber)(
            spec, y, grid, tol, solver_settings, limit_settings, t_values
        )
        for y in distinct.values()
    )
    by_points = {
        points: solution for points, solution in zip(distinct, solutions)
    }

    log_density = np.full((len(base), grid.size), np.nan)
    areas = np.full(len(base), np.nan)
    failed: List[complex] = []
    errors: Dict[complex, str] = {}
    for k, (_, _, y) in enumerate(base):
        solution = by_points[spec.model(y).points]
        if solution.log_density is None or not solution.converged:
            failed.append(y)
            errors[y] = solution.error or "not converged"
            continue
        log_density[k] = solution.log_density
        areas[k] = solution.area

    result = RelativeDensityField(spec, grid, base, log_density, areas, failed, errors)
    if failed:
        logger.warning(
            "Family field incomplete",
            failed=len(failed),
            fibers=len(base),
        )
    logger.info(
        "Family solved",
        fibers=len(base),
        distinct=len(distinct),
        complete=result.complete,
        area_defect=result.area_defect,
    )
    return result


def restriction_defect(
    density_field: RelativeDensityField,
    samples: Optional[Sequence[complex]] = None,
    tol: Optional[float] = None,
    *,
    solver_settings: Optional[SolverSettings] = None,
    limit_settings: Optional[LimitSettings] = None,
) -> float:
    """場的纖維切片與獨立纖維求解的最大對數密度差（預設取中心與最後一個底節點）"""
    if samples is None:
        base = density_field.base
        samples = [base[len(base) // 2][2], base[-1][2]]
    worst = 0.0
    for y in samples:
        solution = solve_fiber(
            density_field.spec,
            y,
            density_field.grid,
            tol,
            solver_settings,
            limit_settings,
        )
        if solution.log_density is None:
            return float("inf")
        diff = np.abs(solution.log_density - density_field.fiber(y))
        worst = max(worst, float(np.max(diff)))
    return worst


# ----------------------------------------------------------------------
# 離散複 Hessian
# ----------------------------------------------------------------------


@dataclass
class PSHReport:
    """
    2×2 複 Hessian 最小特徵值的報告

    Attributes:
        min_eigenvalue: 所有評估節點的最小特徵值
        location: (y, x 節點)
        tolerance: 容許值
        evaluated: 評估的 (x, y) 節點數
        excluded: 因靠近奇異軌跡而排除的節點數
        boundary_sup: 底圓盤外環纖維在正則集上的對數密度上確界
        interior_sup: 內部纖維的同一量
        base_rows: 每個底節點的最小特徵值
    """

    label: str
    min_eigenvalue: float
    location: Optional[Tuple[complex, int]]
    tolerance: float
    evaluated: int
    excluded: int
    min_fiber_term: float
    max_mixed_term: float
    boundary_sup: float
    interior_sup: float
    base_rows: List[Dict[str, Any]] = field(default_factory=list)
    details: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.evaluated > 0 and self.min_eigenvalue >= -self.tolerance

    @property
    def bounded_above(self) -> bool:
        return bool(np.isfinite(self.boundary_sup))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "min_eigenvalue": self.min_eigenvalue,
            "location": None
            if self.location is None
            else [self.location[0].real, self.location[0].imag, self.location[1]],
            "tolerance": self.tolerance,
            "passed": self.passed,
            "evaluated": self.evaluated,
            "excluded": self.excluded,
            "min_fiber_term": self.min_fiber_term,
            "max_mixed_term": self.max_mixed_term,
            "boundary_sup": self.boundary_sup,
            "interior_sup": self.interior_sup,
            "bounded_above": self.bounded_above,
            **self.details,
        }


def _log_cosh(s: np.ndarray) -> np.ndarray:
    return np.logaddexp(s, -s) - np.log(2.0)


def _periodic_phi_gradient(values: np.ndarray, phi: np.ndarray) -> np.ndarray:
    ext_phi = np.concatenate([[phi[-1] - TWO_PI], phi, [phi[0] + TWO_PI]])
    ext = np.concatenate([values[:, -1:], values, values[:, :1]], axis=1)
    return np.asarray(np.gradient(ext, ext_phi, axis=1))[:, 1:-1]


def _moving_frame(spec: FamilySpec, grid: RadialGrid, y: complex) -> np.ndarray:
    """
    d·log|x − p(y)|²，以離散 Green 函數 G_p ≈ log χ_p² 實現

    與求解器對數密度中的 −d·G_p 相消；在軌跡外為 (x, y) 的多重調和函數。
    """
    fiber_grid = grid.with_model(spec.model(y))
    p = spec.moving_point(y)
    log_abs = (
        fiber_grid.green(spec.moving_index)
        + np.logaddexp(0.0, 2.0 * grid.node_s)
        + np.log1p(abs(p) ** 2)
    )
    log_abs[-1] = 0.0
    return float(spec.moving_coefficient) * log_abs


def _hessian_report(
    label: str,
    spec: FamilySpec,
    grid: RadialGrid,
    base: Sequence[Tuple[int, int, complex]],
    log_values: np.ndarray,
    frames: Optional[np.ndarray],
    power: float,
    tolerance: float,
) -> PSHReport:
    """
    Ψ = log F + power·log cosh s（+ 多重調和框架項）的 2×2 複 Hessian

    Ψ_ww̄ 由網格 Laplacian 給出：(L log F + power)/(4 cosh² s)；
    y 方向與混合項以底方格的中央差分計算。
    """
    h = spec.base_spacing
    axis = spec.base_axis
    slot = {(i, j): k for k, (i, j, _) in enumerate(base)}
    uv = grid.tensor_view(grid.U * grid.V)
    s = grid.s
    cosh_term = power * _log_cosh(s)[:, None]
    z = grid.tensor_view(grid.node_z())

    static_keep = grid.tensor_view(
        grid.excision_mask(range(len(spec.static_points)), spec.track_exclusion)
    )

    psi: Dict[int, np.ndarray] = {}
    for k in range(len(base)):
        values = grid.tensor_view(log_values[k]) + cosh_term
        if frames is not None:
            values = values + grid.tensor_view(frames[k])
        psi[k] = values

    radius = spec.base_radius
    min_eig = np.inf
    location: Optional[Tuple[complex, int]] = None
    evaluated = 0
    excluded = 0
    min_fiber = np.inf
    max_mixed = 0.0
    rows: List[Dict[str, Any]] = []
    boundary_sup = -np.inf
    interior_sup = -np.inf

    for k, (i, j, y) in enumerate(base):
        row_values = log_values[k]
        if not np.all(np.isfinite(row_values)):
            continue
        stencil = [(i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)]
        keep = static_keep.copy()
        for ii, jj in [(i, j)] + stencil:
            if 0 <= ii < spec.base_nodes and 0 <= jj < spec.base_nodes:
                y_n = complex(axis[ii], axis[jj])
                keep &= np.abs(z - spec.moving_point(y_n)) >= spec.track_exclusion

        sup = float(np.max(np.where(keep, grid.tensor_view(row_values), -np.inf)))
        if abs(y) >= BOUNDARY_BAND * radius:
            boundary_sup = max(boundary_sup, sup)
        else:
            interior_sup = max(interior_sup, sup)

        if not all(n in slot for n in stencil):
            continue
        neighbors = [psi[slot[n]] for n in stencil]
        if not all(np.all(np.isfinite(v)) for v in neighbors):
            continue
        center = psi[k]
        east, west, north, south = neighbors

        a = (grid.tensor_view(grid.laplacian_values(row_values)) + power) * uv
        d_y1 = (east - west) / (2.0 * h)
        d_y2 = (north - south) / (2.0 * h)
        c = 0.25 * (east + west + north + south - 4.0 * center) / h**2
        ds_y1 = np.gradient(d_y1, s, axis=0)
        ds_y2 = np.gradient(d_y2, s, axis=0)
        dphi_y1 = _periodic_phi_gradient(d_y1, grid.phi)
        dphi_y2 = _periodic_phi_gradient(d_y2, grid.phi)
        b_abs2 = 0.0625 * ((ds_y1 + dphi_y2) ** 2 + (ds_y2 - dphi_y1) ** 2)

        eig = 0.5 * (a + c) - np.sqrt(0.25 * (a - c) ** 2 + b_abs2)
        eig = np.where(keep, eig, np.inf)
        evaluated += int(np.count_nonzero(keep))
        excluded += int(keep.size - np.count_nonzero(keep))
        flat = int(np.argmin(eig))
        local = float(eig.ravel()[flat])
        min_fiber = min(min_fiber, float(np.min(np.where(keep, a, np.inf))))
        max_mixed = max(
            max_mixed, float(np.sqrt(np.max(np.where(keep, b_abs2, 0.0))))
        )
        node = 1 + flat
        rows.append(
            {
                "i": i,
                "j": j,
                "y_re": y.real,
                "y_im": y.imag,
                "min_eigenvalue": local,
                "node": node,
                "s": float(grid.node_s[node]),
                "phi": float(grid.node_phi[node]),
            }
        )
        if local < min_eig:
            min_eig = local
            location = (y, node)

    report = PSHReport(
        label=label,
        min_eigenvalue=float(min_eig),
        location=location,
        tolerance=tolerance,
        evaluated=evaluated,
        excluded=excluded,
        min_fiber_term=float(min_fiber),
        max_mixed_term=float(max_mixed),
        boundary_sup=float(boundary_sup),
        interior_sup=float(interior_sup),
        base_rows=rows,
    )
    log = logger.info if report.passed else logger.warning
    log(
        "Complex Hessian test finished",
        label=label,
        min_eigenvalue=report.min_eigenvalue,
        evaluated=evaluated,
        excluded=excluded,
        passed=report.passed,
    )
    return report


def psh_test(
    density_field: RelativeDensityField, tolerance: float = 1e-4
) -> PSHReport:
    """
    −log h_K 在 (x, y) 的多重次調和性檢驗

    Ψ = log ρ − 2·log cosh s + d·log|x − p(y)|² 為固定平凡化中的相對密度；
    框架項在軌跡外是多重調和的，不改變 Hessian 的值。

    Args:
        density_field: 完整的相對密度場
        tolerance: 最小特徵值的容許值

    Returns:
        PSHReport: 最小特徵值、位置、排除節點數與邊界有界性

    Raises:
        ValueError: 場不完整
    """
    if not density_field.complete:
        raise ValueError(
            f"psh test needs a complete field; "
            f"{len(density_field.failed)} fibers failed"
        )
    spec = density_field.spec
    frames = np.stack(
        [_moving_frame(spec, density_field.grid, y) for _, _, y in density_field.base]
    )
    report = _hessian_report(
        "canonical",
        spec,
        density_field.grid,
        density_field.base,
        density_field.log_density,
        frames,
        float(CANONICAL_DEGREE),
        tolerance,
    )
    report.details["classification"] = spec.classification.value
    return report


@dataclass(frozen=True)
class FiberWeightPack:
    """
    纖維 Bergman 測試的權重包

    極點係數落在纖維的標記點上（預設為族的除子），
    另加 y 方向漂移 γ·sign·|y|²；sign = −1 為負曲率的對照組。
    """

    gamma: float = 1.0
    sign: int = 1
    pole_coefficients: Optional[Dict[int, Fraction]] = None

    def __post_init__(self) -> None:
        if self.sign not in (1, -1):
            raise ValueError(f"Drift sign must be +1 or -1, got {self.sign}")

    def drift(self, y: complex) -> float:
        return self.sign * self.gamma * abs(y) ** 2

    def divisor(self, spec: FamilySpec) -> LogDivisor:
        if self.pole_coefficients is None:
            return spec.divisor
        return LogDivisor.from_mapping(dict(self.pole_coefficients))


def _fiber_log_kernel(
    spec: FamilySpec,
    y: complex,
    grid: RadialGrid,
    divisor: LogDivisor,
    twist_degree: int,
    log_twist: float,
    settings: BergmanSettings,
) -> np.ndarray:
    pair = LogPair(spec.model(y), divisor)
    fiber_grid = grid.with_model(pair.model)
    twist = MetricWeight(
        np.full(grid.size, log_twist), {}, QLineBundle(twist_degree)
    )
    system = BergmanSystem.singular(
        pair, grid=fiber_grid, twist=twist, settings=settings
    )
    run = run_inner(system, ell_max=1, settings=settings)
    return run.states[0].log_kernel


def fiber_bergman_psh_test(
    spec: FamilySpec,
    degree: Optional[int] = None,
    pack: Optional[FiberWeightPack] = None,
    *,
    grid: Optional[RadialGrid] = None,
    resolution: Optional[int] = None,
    tolerance: float = 1e-4,
    grid_settings: Optional[GridSettings] = None,
    settings: Optional[BergmanSettings] = None,
    n_jobs: int = 1,
) -> PSHReport:
    """
    纖維 Bergman 核（ℓ = 1、m = 1）的多重次調和性檢驗

    纖維測度為 Π χ_i^{−2d_i}·e^{−ψ_A}，其中 ψ_A 在纖維上為常數
    d·log(1 + |p(y)|²) + γ·sign·|y|²，使權重 Σd·log|x − p(y)|² + 漂移
    成為全空間的權重。Ψ = log K + N·log cosh s。

    Args:
        spec: 族（KLT 係數）
        degree: 線叢次數 N = deg A + a·κ（預設由 twist_degree 決定）
        pack: 權重包
        grid: 共用 x 網格
        resolution: 網格解析度
        tolerance: 最小特徵值的容許值
        grid_settings: 網格配置
        settings: Bergman 配置
        n_jobs: 並行工作數

    Returns:
        PSHReport: 與 psh_test 相同的報告

    Raises:
        DegreeBookkeepingError: degree 小於 a·κ 或不是整數
    """
    settings = settings or BergmanSettings()
    pack = pack or FiberWeightPack()
    spec.require_regular()
    divisor = pack.divisor(spec)
    fiber_pair = LogPair(spec.model(0j), divisor)
    step = fiber_pair.a * fiber_pair.degree
    if degree is None:
        degree = int(settings.twist_degree + step)
    twist_degree = Fraction(degree) - step
    if twist_degree < 0 or twist_degree.denominator != 1:
        raise DegreeBookkeepingError(
            f"Bundle degree {degree} leaves a twist of degree {twist_degree}"
        )
    grid = grid or family_grid(spec, resolution, settings=grid_settings)
    base = spec.base_points()

    moving_pole = float(divisor.coefficient_at(spec.moving_index))
    twists = [
        moving_pole * float(np.log1p(abs(spec.moving_point(y)) ** 2)) + pack.drift(y)
        for _, _, y in base
    ]
    kernels = Parallel(n_jobs=n_jobs)(
        delayed(_fiber_log_kernel)(
            spec, y, grid, divisor, int(twist_degree), twist, settings
        )
        for (_, _, y), twist in zip(base, twists)
    )
    report = _hessian_report(
        "bergman",
        spec,
        grid,
        base,
        np.stack(kernels),
        None,
        float(degree),
        tolerance,
    )
    report.details.update(
        {"degree": degree, "gamma": pack.gamma, "sign": pack.sign}
    )
    return report
