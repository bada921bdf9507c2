"""
對數極座標網格測試

測試胞質量、離散 Laplacian 與 Green 函數的守恆性質。
"""

from fractions import Fraction

import numpy as np
import pytest

from kelab.core.config import GridSettings
from kelab.core.exceptions import GridMismatchError, ResolutionError
from kelab.discretization.grid import build_grid, grid_for_pair
from kelab.geometry.model import LogDivisor, LogPair

TWO_PI = 2.0 * np.pi


@pytest.mark.unit
class TestRadialGrid:
    """測試網格建構"""

    def test_size(self, sphere_grid):
        """張量節點加兩個極帽節點"""
        assert sphere_grid.size == sphere_grid.n_s * sphere_grid.n_phi + 2
        assert np.isneginf(sphere_grid.node_s[0])
        assert np.isposinf(sphere_grid.node_s[-1])

    def test_total_mass(self, sphere_grid, klt_grid):
        """ω_FS 胞質量總和為 2π"""
        assert sphere_grid.weights.sum() == pytest.approx(TWO_PI, abs=1e-12)
        assert klt_grid.weights.sum() == pytest.approx(TWO_PI, abs=1e-12)
        assert np.all(klt_grid.weights > 0)

    def test_singular_poles_extend_grid(self, sphere_grid, klt_grid):
        """奇異係數在 0 與 ∞ 需要更長的極點尾段"""
        assert klt_grid.extent[0] <= sphere_grid.extent[0]
        assert klt_grid.extent[1] >= sphere_grid.extent[1]

    @pytest.mark.parametrize("resolution", [6, 17])
    def test_bad_resolution(self, three_point_model, resolution):
        """解析度不足或為奇數"""
        with pytest.raises(ResolutionError):
            build_grid(three_point_model, resolution)

    def test_field_shape_checked(self, sphere_grid):
        """形狀不符的場被拒絕"""
        with pytest.raises(GridMismatchError):
            sphere_grid.apply_laplacian(np.zeros(sphere_grid.size - 1))

    def test_describe(self, sphere_grid):
        """描述欄位"""
        info = sphere_grid.describe()

        assert info["size"] == sphere_grid.size


@pytest.mark.unit
class TestClusterExponents:
    """測試叢集指數：d < (b−1)/b 的最小整數 b"""

    def test_float_coefficient_two_thirds(self, three_point_model):
        """浮點 2/3 不得因捨入得到 b = 3"""
        grid = build_grid(three_point_model, 16, coefficients={1: 2.0 / 3.0})

        assert grid.cluster_map == {1: 4}
        assert grid.capped_exponents == {}

    def test_pair_uses_exact_coefficients(self, three_point_model):
        """由對數對推得的 b 與精確有理數一致"""
        pair = LogPair(
            three_point_model, LogDivisor.uniform(range(3), Fraction(2, 3))
        )

        grid = grid_for_pair(pair, 16)

        assert grid.cluster_map == {1: 4}

    def test_large_exponent_within_maximum(self, three_point_model):
        """d = 9/10 需要 b = 11"""
        pair = LogPair(
            three_point_model, LogDivisor.uniform(range(3), Fraction(9, 10))
        )

        grid = grid_for_pair(pair, 16, GridSettings(max_cluster_exponent=12))

        assert grid.cluster_map == {1: 11}
        assert grid.capped_exponents == {}

    def test_cap_is_recorded(self, three_point_model):
        """超過上限時截斷並記錄推得的 b"""
        pair = LogPair(
            three_point_model, LogDivisor.uniform(range(3), Fraction(9, 10))
        )

        grid = grid_for_pair(pair, 16, GridSettings(max_cluster_exponent=8))

        assert grid.cluster_map == {1: 8}
        assert grid.capped_exponents == {1: 11}
        assert grid.describe()["capped_exponents"] == {"1": 11}

    def test_explicit_exponent_wins(self, three_point_model):
        """明確指定的指數優先於係數推得的值"""
        grid = build_grid(
            three_point_model, 16, {1: 2}, coefficients={1: 2.0 / 3.0}
        )

        assert grid.cluster_map == {1: 2}


@pytest.mark.unit
class TestLaplacian:
    """測試離散 Laplacian"""

    def test_constants_in_kernel(self, klt_grid):
        """常數的 Laplacian 為零"""
        out = klt_grid.apply_laplacian(np.ones(klt_grid.size))

        np.testing.assert_allclose(out, 0.0, atol=1e-8)

    def test_dirichlet_form(self, sphere_grid):
        """uᵀ(W·L)u = Dirichlet 形式 ≤ 0"""
        rng = np.random.default_rng(7)
        u = rng.standard_normal(sphere_grid.size)

        form = sphere_grid.dirichlet_form(u)

        assert form < 0
        assert u @ sphere_grid.apply_laplacian(u) == pytest.approx(form, rel=1e-9)

    def test_total_flux_vanishes(self, sphere_grid):
        """任意場的 W·L u 總和為零"""
        u = np.cos(sphere_grid.node_phi) * np.tanh(
            np.clip(sphere_grid.node_s, -5.0, 5.0)
        )

        assert sphere_grid.apply_laplacian(u).sum() == pytest.approx(0.0, abs=1e-9)


@pytest.mark.unit
class TestGreenFunction:
    """測試 Green 函數"""

    @pytest.mark.parametrize("index", [0, 1, 2])
    def test_normalization(self, klt_grid, index):
        """Σ w G = −2π"""
        green = klt_grid.green(index)

        assert np.dot(klt_grid.weights, green) == pytest.approx(-TWO_PI, rel=1e-9)

    def test_equation(self, sphere_grid):
        """W·L·G = −w + 2π δ̃"""
        green = sphere_grid.green(0)
        expected = -sphere_grid.weights.copy()
        expected[0] += TWO_PI

        np.testing.assert_allclose(
            sphere_grid.apply_laplacian(green), expected, atol=1e-8
        )

    def test_green_peaks_at_point(self, sphere_grid):
        """G 在標記點附近最負"""
        green = sphere_grid.green(None)

        assert np.argmin(green) == sphere_grid.infinity_node

    def test_cached(self, klt_grid):
        """重複呼叫回傳快取"""
        assert klt_grid.green(1) is klt_grid.green(1)


@pytest.mark.unit
class TestDeltaWeights:
    """測試點質量分配"""

    @pytest.mark.parametrize("point", [None, 0j, 1 + 0j, 0.3 + 0.7j])
    def test_sum_to_one(self, klt_grid, point):
        """權重總和為 1"""
        weights = klt_grid.delta_weights(point)

        assert sum(weights.values()) == pytest.approx(1.0)
        assert all(w > 0 for w in weights.values())

    def test_poles(self, klt_grid):
        """極點落在極帽節點"""
        assert klt_grid.delta_weights(None) == {klt_grid.size - 1: 1.0}
        assert klt_grid.delta_weights(0j) == {0: 1.0}
