"""
對數極座標網格

球面以 (s, φ) = (log|z|, arg z) 張量網格加上 0 與 ∞ 兩個極帽節點離散化。
節點質量為精確的 ω_FS 胞質量 ΔU·Δφ，U = |z|²/(1+|z|²)。
非極點的標記點在 s 與 φ 方向各插入冪律叢集，使標記點落在四個胞的公共角。

節點索引：0 為 0 極帽，1 + j·N_φ + k 為張量節點，最後一個為 ∞ 極帽。
"""

from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu
from scipy.special import betainc, betaln, expit

from ..core.config import GridSettings
from ..core.exceptions import GridMismatchError, InfiniteMassError, ResolutionError
from ..core.logging import get_logger
from ..geometry.model import (
    MarkedSphereModel,
    PointKind,
    chordal_sq,
    derived_cluster_exponent,
)

logger = get_logger(__name__)

TWO_PI = 2.0 * np.pi
# 極點奇異時延伸範圍的上限
MAX_EXTENT = 60.0
# 尾段幾何增長率
TAIL_GROWTH = 1.15
# 浮點係數還原為有理數時的分母上限
MAX_COEFFICIENT_DENOMINATOR = 10**6


@dataclass(frozen=True)
class ClusterSpec:
    """
    冪律叢集

    在中心兩側各放 rings 個節點，偏移 width·((k+½)/rings)^exponent。
    exponent = 1 為均勻加密區塊。
    """

    center: complex
    exponent: int
    width: float
    rings: int

    def offsets(self, floor: float) -> np.ndarray:
        k = np.arange(self.rings, dtype=float)
        raw = self.width * ((k + 0.5) / self.rings) ** self.exponent
        return np.maximum(raw, floor * (k + 1.0))


@dataclass
class GridField:
    """網格函數"""

    values: np.ndarray
    grid: "RadialGrid"

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        self.grid.check_values(self.values)
        if not np.all(np.isfinite(self.values)):
            raise GridMismatchError("GridField values must be finite at every node")

    def __add__(self, other: Any) -> "GridField":
        if isinstance(other, GridField):
            self.grid.require_compatible(other.grid)
            return GridField(self.values + other.values, self.grid)
        return GridField(self.values + other, self.grid)

    def __sub__(self, other: Any) -> "GridField":
        if isinstance(other, GridField):
            self.grid.require_compatible(other.grid)
            return GridField(self.values - other.values, self.grid)
        return GridField(self.values - other, self.grid)

    def __neg__(self) -> "GridField":
        return GridField(-self.values, self.grid)

    def __mul__(self, other: float) -> "GridField":
        return GridField(self.values * other, self.grid)

    __rmul__ = __mul__


class _SharedOperators:
    """同一組節點共用的稀疏算子、分解與 Green 函數快取"""

    def __init__(
        self, edges: Tuple[np.ndarray, np.ndarray, np.ndarray], weights: np.ndarray
    ):
        self.edges = edges
        tail, head, coeff = edges
        n = weights.size
        off = sp.coo_matrix(
            (
                np.concatenate([coeff, coeff]),
                (np.concatenate([tail, head]), np.concatenate([head, tail])),
            ),
            shape=(n, n),
        ).tocsr()
        diag = -np.asarray(off.sum(axis=1)).ravel()
        self.matrix = (off + sp.diags(diag)).tocsr()
        self.weights = weights
        self._bordered_lu: Any = None
        self.green_cache: Dict[Any, np.ndarray] = {}
        self.factor_cache: Dict[Any, np.ndarray] = {}

    def bordered_lu(self) -> Any:
        if self._bordered_lu is None:
            n = self.weights.size
            w = self.weights.reshape(-1, 1)
            bordered = sp.bmat(
                [[self.matrix, sp.csr_matrix(w)], [sp.csr_matrix(w.T), None]],
                format="csc",
            )
            self._bordered_lu = splu(bordered)
            logger.debug("Bordered Laplacian factorized", size=n + 1)
        return self._bordered_lu

    def __getstate__(self) -> Dict[str, Any]:
        state = dict(self.__dict__)
        state["_bordered_lu"] = None
        return state


class RadialGrid:
    """
    標記球面上的對數極座標網格

    Attributes:
        model: 標記球面
        s: 張量節點的對數半徑（遞增）
        s_faces: 徑向面（長度 N_s + 1）
        phi: 角度節點（[0, 2π) 遞增）
        phi_lo, phi_hi: 每個角度節點胞的下、上界
        cluster_map: 標記點索引 → 使用的叢集指數 b
        capped_exponents: 超過上限而被截斷的標記點 → 推得的 b
        weights: 每個節點胞的 ω_FS 質量，總和 2π
    """

    def __init__(
        self,
        model: MarkedSphereModel,
        s: np.ndarray,
        phi: np.ndarray,
        cluster_map: Dict[int, int],
        clusters: Sequence[ClusterSpec] = (),
        settings: Optional[GridSettings] = None,
        shared: Optional[_SharedOperators] = None,
    ):
        self.model = model
        self.s = np.asarray(s, dtype=float)
        self.phi = np.asarray(phi, dtype=float)
        self.cluster_map = dict(cluster_map)
        self.capped_exponents: Dict[int, int] = {}
        self.clusters = tuple(clusters)
        self.settings = settings or GridSettings()

        n_s, n_phi = self.s.size, self.phi.size
        self.n_s = n_s
        self.n_phi = n_phi
        self.size = n_s * n_phi + 2

        # 徑向面：中點，端面外推半個間距
        faces = np.empty(n_s + 1)
        faces[1:-1] = 0.5 * (self.s[1:] + self.s[:-1])
        faces[0] = self.s[0] - 0.5 * (self.s[1] - self.s[0])
        faces[-1] = self.s[-1] + 0.5 * (self.s[-1] - self.s[-2])
        self.s_faces = faces
        self.ds_cell = np.diff(faces)
        self.ds_gap = np.diff(self.s)

        # 角度面
        nxt = np.roll(self.phi, -1)
        gap = np.mod(nxt - self.phi, TWO_PI)
        gap[gap == 0.0] = TWO_PI
        self.dphi_gap = gap
        self.phi_hi = self.phi + 0.5 * gap
        self.phi_lo = self.phi - 0.5 * np.roll(gap, 1)
        self.dphi_cell = self.phi_hi - self.phi_lo

        # 面上的面積座標
        self.U_faces = expit(2.0 * faces)
        self.V_faces = expit(-2.0 * faces)
        dU = np.where(
            0.5 * (faces[1:] + faces[:-1]) > 0.0,
            self.V_faces[:-1] - self.V_faces[1:],
            self.U_faces[1:] - self.U_faces[:-1],
        )
        self.dU_cell = dU

        weights = np.empty(self.size)
        weights[0] = TWO_PI * self.U_faces[0]
        weights[-1] = TWO_PI * self.V_faces[-1]
        weights[1:-1] = np.outer(dU, self.dphi_cell).ravel()
        self.weights = weights

        node_s = np.empty(self.size)
        node_s[0] = -np.inf
        node_s[-1] = np.inf
        node_s[1:-1] = np.repeat(self.s, n_phi)
        node_phi = np.zeros(self.size)
        node_phi[1:-1] = np.tile(self.phi, n_s)
        self.node_s = node_s
        self.node_phi = node_phi
        self.U = expit(2.0 * node_s)
        self.V = expit(-2.0 * node_s)

        if shared is None:
            shared = _SharedOperators(self._assemble(), weights)
        self._shared = shared
        self.logger = get_logger(f"{__name__}.{self.__class__.__name__}")

    # ------------------------------------------------------------------
    # 基本存取
    # ------------------------------------------------------------------

    @property
    def infinity_node(self) -> int:
        return self.size - 1

    @property
    def laplacian_matrix(self) -> sp.csr_matrix:
        """對稱 M 矩陣 W·L（列和為零）"""
        return self._shared.matrix

    @property
    def extent(self) -> Tuple[float, float]:
        return float(self.s[0]), float(self.s[-1])

    def index(self, j: int, k: int) -> int:
        return 1 + j * self.n_phi + (k % self.n_phi)

    def tensor_view(self, values: np.ndarray) -> np.ndarray:
        """張量節點重排為 (N_s, N_φ)"""
        return np.asarray(values)[1:-1].reshape(self.n_s, self.n_phi)

    def node_z(self) -> np.ndarray:
        """節點複數座標（∞ 極帽為 nan）"""
        z = np.exp(self.node_s + 1j * self.node_phi)
        z[-1] = np.nan
        return z

    def check_values(self, values: np.ndarray) -> None:
        if np.shape(values) != (self.size,):
            raise GridMismatchError(
                f"Field of shape {np.shape(values)} does not match "
                f"grid size {self.size}"
            )

    def compatible(self, other: "RadialGrid") -> bool:
        return other is self or (
            other.size == self.size
            and np.array_equal(other.s, self.s)
            and np.array_equal(other.phi, self.phi)
        )

    def require_compatible(self, other: "RadialGrid") -> None:
        if not self.compatible(other):
            raise GridMismatchError("Fields live on different grids")

    def field(self, values: np.ndarray) -> GridField:
        return GridField(values, self)

    def with_model(self, model: MarkedSphereModel) -> "RadialGrid":
        """相同節點、不同標記點集合（族計算使用）"""
        cluster_map = {
            i: self.cluster_map.get(i, 1)
            for i in range(model.size)
            if model.kind(i) == PointKind.AFFINE
        }
        return RadialGrid(
            model,
            self.s,
            self.phi,
            cluster_map,
            self.clusters,
            self.settings,
            self._shared,
        )

    # ------------------------------------------------------------------
    # 算子
    # ------------------------------------------------------------------

    def _assemble(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """邊列表 (tail, head, a)：W·L 的非對角係數"""
        n_s, n_phi = self.n_s, self.n_phi
        rows: List[np.ndarray] = []
        cols: List[np.ndarray] = []
        vals: List[np.ndarray] = []

        jj, kk = np.meshgrid(np.arange(n_s), np.arange(n_phi), indexing="ij")

        # 徑向邊
        j_r, k_r = jj[:-1].ravel(), kk[:-1].ravel()
        a_rad = 0.5 * self.dphi_cell[k_r] / self.ds_gap[j_r]
        rows.append(1 + j_r * n_phi + k_r)
        cols.append(1 + (j_r + 1) * n_phi + k_r)
        vals.append(a_rad)

        # 角向邊（週期）
        j_a, k_a = jj.ravel(), kk.ravel()
        a_ang = 0.5 * self.ds_cell[j_a] / self.dphi_gap[k_a]
        rows.append(1 + j_a * n_phi + k_a)
        cols.append(1 + j_a * n_phi + (k_a + 1) % n_phi)
        vals.append(a_ang)

        # 極帽：對 r² 型函數精確的通量
        k_all = np.arange(n_phi)
        a_zero = self.dphi_cell * np.exp(2.0 * (self.s_faces[0] - self.s[0]))
        rows.append(np.zeros(n_phi, dtype=int))
        cols.append(1 + k_all)
        vals.append(a_zero)
        a_inf = self.dphi_cell * np.exp(-2.0 * (self.s_faces[-1] - self.s[-1]))
        rows.append(np.full(n_phi, self.size - 1))
        cols.append(1 + (n_s - 1) * n_phi + k_all)
        vals.append(a_inf)

        return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)

    def apply_laplacian(self, values: np.ndarray) -> np.ndarray:
        """
        W·L u，以邊通量 a_ij (u_j − u_i) 逐邊累加

        捨入誤差與各邊通量同階（叢集內耦合係數可達 1e7）。
        """
        self.check_values(values)
        tail, head, coeff = self._shared.edges
        flux = coeff * (values[head] - values[tail])
        return np.bincount(tail, flux, self.size) - np.bincount(head, flux, self.size)

    def laplacian_values(self, values: np.ndarray) -> np.ndarray:
        """L u = W⁻¹ (W·L) u，相對於 ω_FS 的 i∂∂̄u 密度"""
        return self.apply_laplacian(np.asarray(values, dtype=float)) / self.weights

    def dirichlet_form(self, values: np.ndarray) -> float:
        """uᵀ(W·L)u = −Σ a_ij (u_j − u_i)² ≤ 0"""
        tail, head, coeff = self._shared.edges
        diff = values[head] - values[tail]
        return float(-np.sum(coeff * diff * diff))

    def delta_weights(self, point: Optional[complex]) -> Dict[int, float]:
        """
        點質量的節點分配 δ̃_p（總和為 1）

        極點落在極帽節點；其餘點以 (s, φ) 雙線性內插分配到包含它的胞角。
        """
        if point is None:
            return {self.size - 1: 1.0}
        if point == 0:
            return {0: 1.0}
        s_p = float(np.log(abs(point)))
        phi_p = float(np.mod(np.angle(point), TWO_PI))
        if s_p <= self.s[0]:
            return {0: 1.0}
        if s_p >= self.s[-1]:
            return {self.size - 1: 1.0}

        j = int(np.searchsorted(self.s, s_p, side="right") - 1)
        j = min(max(j, 0), self.n_s - 2)
        ts = (s_p - self.s[j]) / (self.s[j + 1] - self.s[j])

        k = int(np.searchsorted(self.phi, phi_p, side="right") - 1)
        if k < 0:
            k = self.n_phi - 1
        k_next = (k + 1) % self.n_phi
        tp = np.mod(phi_p - self.phi[k], TWO_PI) / self.dphi_gap[k]

        out: Dict[int, float] = {}
        for jj, ws in ((j, 1.0 - ts), (j + 1, ts)):
            for kk, wp in ((k, 1.0 - tp), (k_next, tp)):
                weight = float(ws * wp)
                if weight > 0.0:
                    idx = self.index(jj, kk)
                    out[idx] = out.get(idx, 0.0) + weight
        return out

    def _point_location(self, index_or_point: Any) -> Optional[complex]:
        if isinstance(index_or_point, (int, np.integer)):
            return self.model.points[int(index_or_point)]
        return index_or_point  # type: ignore[no-any-return]

    def green(self, index_or_point: Any) -> np.ndarray:
        """
        離散 Green 函數 G_p ≈ log χ_p²

        解 W·L·G = −w + 2π δ̃_p，並以 Σ w G = −2π 正規化。

        Args:
            index_or_point: 標記點索引或複數位置（None 為 ∞）

        Returns:
            np.ndarray: 節點值
        """
        location = self._point_location(index_or_point)
        key = ("inf",) if location is None else (complex(location),)
        cache = self._shared.green_cache
        if key not in cache:
            rhs = np.zeros(self.size + 1)
            rhs[: self.size] = -self.weights
            for node, weight in self.delta_weights(location).items():
                rhs[node] += TWO_PI * weight
            rhs[-1] = -TWO_PI
            solution = self._shared.bordered_lu().solve(rhs)
            cache[key] = np.asarray(solution[: self.size])
        return cache[key]

    def chordal_sq(self, index_or_point: Any) -> np.ndarray:
        """節點到標記點的弦距離平方"""
        location = self._point_location(index_or_point)
        return chordal_sq(self.node_s, self.node_phi, location)

    def singular_factor(self, exponents: Dict[int, float]) -> np.ndarray:
        """
        奇異因子 Π χ_i^{2e_i} 的胞平均

        極點的冪次以正則化不完全 beta 函數精確積分每個胞；
        非極點以節點取樣，χ² 下限為局部胞尺度的四分之一。

        Raises:
            InfiniteMassError: 任一冪次 ≤ −1
        """
        for index, e in exponents.items():
            if e <= -1.0:
                raise InfiniteMassError(
                    f"Exponent {e:g} at marked point {index} gives infinite mass",
                    exponent=e,
                    point=index,
                )
        active = {i: float(e) for i, e in exponents.items() if e != 0.0}
        if not active:
            return np.ones(self.size)
        key = tuple(
            sorted((repr(self._point_location(i)), e) for i, e in active.items())
        )
        cache = self._shared.factor_cache
        if key in cache:
            return cache[key]

        e0 = 0.0
        e_inf = 0.0
        factor = np.ones(self.size)
        for index, e in active.items():
            location = self._point_location(index)
            if location is None:
                e_inf += e
            elif location == 0:
                e0 += e
            else:
                q = self.chordal_sq(index)
                floor = self.weights / (32.0 * np.pi)
                factor *= np.maximum(q, floor) ** e

        if e0 != 0.0 or e_inf != 0.0:
            factor *= self._pole_cell_average(e0, e_inf)

        cache[key] = factor
        return factor

    def _pole_cell_average(self, e0: float, e_inf: float) -> np.ndarray:
        """U^{e0} V^{e∞} 在每個胞上的精確平均"""
        a, b = e0 + 1.0, e_inf + 1.0
        log_beta = betaln(a, b)
        Uf, Vf = self.U_faces, self.V_faces

        # 以下側累積 I_U 與上側互補 I_V 表示每個面以下的質量
        lower = betainc(a, b, Uf)
        upper = betainc(b, a, Vf)
        mid = 0.5 * (self.s_faces[1:] + self.s_faces[:-1])
        mass = np.where(
            mid <= 0.0,
            lower[1:] - lower[:-1],
            upper[:-1] - upper[1:],
        ) * np.exp(log_beta)
        ring_avg = mass / self.dU_cell

        out = np.empty(self.size)
        out[0] = np.exp(log_beta) * lower[0] / Uf[0]
        out[-1] = np.exp(log_beta) * upper[-1] / Vf[-1]
        out[1:-1] = np.repeat(ring_avg, self.n_phi)
        return out

    # ------------------------------------------------------------------
    # 區域遮罩
    # ------------------------------------------------------------------

    def disk_mask(self, radius: float) -> np.ndarray:
        """|z| < radius 的節點"""
        return self.node_s < np.log(radius)

    def excision_mask(self, indices: Sequence[int], radius: float) -> np.ndarray:
        """
        移除標記點周圍半徑 radius 的圓盤（∞ 用 ζ = 1/z 圖）

        Returns:
            np.ndarray: 保留節點為 True
        """
        keep = np.ones(self.size, dtype=bool)
        z = self.node_z()
        for index in indices:
            p = self.model.points[index]
            if p is None:
                keep &= self.node_s < -np.log(radius)
            elif p == 0:
                keep &= self.node_s >= np.log(radius)
            else:
                with np.errstate(invalid="ignore"):
                    far = np.abs(z - p) >= radius
                far[-1] = True
                keep &= far
        return keep

    def describe(self) -> Dict[str, Any]:
        return {
            "n_s": self.n_s,
            "n_phi": self.n_phi,
            "size": self.size,
            "extent": list(self.extent),
            "cluster_map": {str(k): v for k, v in self.cluster_map.items()},
            "capped_exponents": {
                str(k): v for k, v in self.capped_exponents.items()
            },
        }

    def __getstate__(self) -> Dict[str, Any]:
        state = dict(self.__dict__)
        state.pop("logger", None)
        return state

    def __setstate__(self, state: Dict[str, Any]) -> None:
        self.__dict__.update(state)
        self.logger = get_logger(f"{__name__}.{self.__class__.__name__}")

    def __repr__(self) -> str:
        return (
            f"RadialGrid(n_s={self.n_s}, n_phi={self.n_phi}, "
            f"extent=({self.s[0]:.2f}, {self.s[-1]:.2f}))"
        )


def _base_s_nodes(resolution: int, extent: float, stretch: float) -> np.ndarray:
    xi = -1.0 + (2.0 * np.arange(resolution) + 1.0) / resolution
    if stretch <= 0.0:
        return extent * xi
    c = extent * stretch / np.sinh(stretch)
    return c * np.sinh(stretch * xi) / stretch


def _tail(start: float, spacing: float, target: float, direction: float) -> np.ndarray:
    """由 start 起幾何增長的尾段節點直到 target"""
    nodes: List[float] = []
    position = start
    step = spacing
    while abs(position - start) < abs(target - start) - 1e-12:
        step *= TAIL_GROWTH
        position += direction * step
        nodes.append(position)
    return np.asarray(nodes)


def _insert_cluster(
    nodes: np.ndarray,
    center: float,
    offsets: np.ndarray,
    width: float,
    periodic: bool,
) -> np.ndarray:
    if periodic:
        distance = np.abs(np.angle(np.exp(1j * (nodes - center))))
        kept = nodes[distance >= width]
        added = np.mod(np.concatenate([center - offsets, center + offsets]), TWO_PI)
    else:
        kept = nodes[np.abs(nodes - center) >= width]
        added = np.concatenate([center - offsets, center + offsets])
    return np.concatenate([kept, added])


def _derived_exponent(coefficient: Any) -> Optional[int]:
    if isinstance(coefficient, float):
        coefficient = Fraction(coefficient).limit_denominator(
            MAX_COEFFICIENT_DENOMINATOR
        )
    return derived_cluster_exponent(coefficient)


def _dedupe(nodes: np.ndarray, floor: float, periodic: bool) -> np.ndarray:
    nodes = np.sort(nodes)
    keep = np.ones(nodes.size, dtype=bool)
    keep[1:] = np.diff(nodes) > floor
    nodes = nodes[keep]
    if periodic and nodes.size > 1 and (nodes[0] + TWO_PI - nodes[-1]) <= floor:
        nodes = nodes[:-1]
    return nodes


def build_grid(
    model: MarkedSphereModel,
    resolution: Optional[int] = None,
    cluster_exponents: Optional[Dict[int, Optional[int]]] = None,
    *,
    coefficients: Optional[Dict[int, float]] = None,
    settings: Optional[GridSettings] = None,
    angular_resolution: Optional[int] = None,
    extra_clusters: Sequence[ClusterSpec] = (),
) -> RadialGrid:
    """
    建立適應標記點的網格

    Args:
        model: 標記球面
        resolution: 基礎徑向節點數（≥ 8，偶數）
        cluster_exponents: 標記點索引 → 叢集指數 b（未給時由係數推得）
        coefficients: 標記點索引 → 奇異係數 d（決定 b 與極點延伸範圍）
        settings: 網格配置
        angular_resolution: 角度節點數
        extra_clusters: 額外的加密叢集

    Returns:
        RadialGrid: 網格

    Raises:
        ResolutionError: 解析度不足或為奇數
    """
    settings = settings or GridSettings()
    resolution = resolution or settings.resolution
    if resolution < 8:
        raise ResolutionError(
            f"Resolution {resolution} is below the minimum of 8 rings"
        )
    if resolution % 2 != 0:
        raise ResolutionError(f"Resolution {resolution} must be even")
    n_phi = angular_resolution or settings.angular_resolution or resolution
    if n_phi < 8:
        raise ResolutionError(f"Angular resolution {n_phi} is below the minimum of 8")

    coefficients = dict(coefficients or {})
    exponents: Dict[int, int] = {}
    capped: Dict[int, int] = {}
    for index in range(model.size):
        requested = (cluster_exponents or {}).get(index)
        if requested is None and index in coefficients:
            requested = _derived_exponent(coefficients[index])
        if requested is None:
            requested = settings.max_cluster_exponent if index in coefficients else 1
        if requested < 1:
            raise ResolutionError(
                f"Cluster exponent must be at least 1, got {requested}"
            )
        if requested > settings.max_cluster_exponent:
            if model.kind(index) == PointKind.AFFINE:
                capped[index] = int(requested)
            requested = settings.max_cluster_exponent
        exponents[index] = int(requested)
    if capped:
        logger.warning(
            "Cluster exponent capped at configured maximum",
            maximum=settings.max_cluster_exponent,
            derived={str(k): v for k, v in capped.items()},
        )

    # 基礎徑向節點與極點尾段
    extent = settings.extent
    s_nodes = _base_s_nodes(resolution, extent, settings.stretch)
    log_tol = np.log(1.0 / settings.cap_mass_tolerance)
    for index in (model.zero_index, model.infinity_index):
        if index is None or coefficients.get(index, 0.0) <= 0.0:
            continue
        d = coefficients[index]
        needed = MAX_EXTENT if d >= 1.0 else log_tol / (2.0 * (1.0 - d))
        needed = min(max(needed, extent), MAX_EXTENT)
        if needed <= abs(s_nodes[0]):
            continue
        spacing = float(s_nodes[1] - s_nodes[0])
        if index == model.zero_index:
            tail = _tail(float(s_nodes[0]), spacing, -needed, -1.0)
            s_nodes = np.concatenate([tail[::-1], s_nodes])
        else:
            tail = _tail(float(s_nodes[-1]), spacing, needed, 1.0)
            s_nodes = np.concatenate([s_nodes, tail])
        logger.info(
            "Grid extent raised for singular pole",
            point=index,
            coefficient=d,
            extent=float(needed),
            tail_nodes=int(tail.size),
        )

    phi_nodes = TWO_PI * (np.arange(n_phi) + 0.5) / n_phi

    clusters: List[ClusterSpec] = []
    for index in model.affine_indices():
        point = model.points[index]
        assert point is not None
        clusters.append(
            ClusterSpec(
                center=point,
                exponent=exponents[index],
                width=settings.cluster_width,
                rings=settings.cluster_rings,
            )
        )
    clusters.extend(extra_clusters)

    for spec in clusters:
        offsets = spec.offsets(settings.spacing_floor)
        s_center = float(np.log(abs(spec.center)))
        phi_center = float(np.mod(np.angle(spec.center), TWO_PI))
        s_nodes = _insert_cluster(s_nodes, s_center, offsets, spec.width, False)
        phi_nodes = _insert_cluster(phi_nodes, phi_center, offsets, spec.width, True)

    s_nodes = _dedupe(s_nodes, settings.spacing_floor, False)
    phi_nodes = _dedupe(phi_nodes, settings.spacing_floor, True)

    grid = RadialGrid(
        model,
        s_nodes,
        phi_nodes,
        {i: exponents[i] for i in model.affine_indices()},
        clusters,
        settings,
    )
    grid.capped_exponents = capped
    logger.debug("Grid built", **grid.describe())
    return grid


def grid_for_pair(
    pair: Any,
    resolution: Optional[int] = None,
    settings: Optional[GridSettings] = None,
    **kwargs: Any,
) -> RadialGrid:
    """以對數對的精確係數推得叢集指數並建立網格"""
    return build_grid(
        pair.model,
        resolution,
        pair.divisor.cluster_exponents(),
        coefficients=pair.coefficient_array(),
        settings=settings,
        **kwargs,
    )
