"""
截面基底、Gram 矩陣與 Bergman 核測試
"""

from fractions import Fraction
from math import factorial

import numpy as np
import pytest

from kelab.bergman.dynamics import BergmanSystem, run_inner, scaled_limit, volume_mu
from kelab.bergman.kernels import bergman_density, extremal_value
from kelab.bergman.sections import (
    SectionBasis,
    check_integrable,
    gram_matrix,
    multiplier_membership,
)
from kelab.core.config import BergmanSettings
from kelab.core.exceptions import (
    BergmanError,
    DegreeBookkeepingError,
    InvalidDivisorError,
    NonIntegrableWeightError,
)
from kelab.geometry.model import QLineBundle
from kelab.geometry.weights import Density, MetricWeight

TWO_PI = 2.0 * np.pi


@pytest.mark.unit
class TestSectionBasis:
    """測試截面基底"""

    def test_dimension(self):
        """h⁰(O(d)) = d + 1"""
        assert SectionBasis(5).dimension == 6
        assert SectionBasis(0, "coherent").dimension == 1

    def test_invalid(self):
        """負次數或未知基底"""
        with pytest.raises(ValueError):
            SectionBasis(-1)
        with pytest.raises(ValueError):
            SectionBasis(2, "legendre")

    def test_spiral_points_unit(self):
        """螺旋點的齊次座標為單位向量"""
        points = SectionBasis(7, "coherent").spiral_points()

        np.testing.assert_allclose(np.sum(np.abs(points) ** 2, axis=1), 1.0)


@pytest.mark.unit
class TestGramMatrix:
    """測試 Gram 矩陣"""

    def test_monomial_fs_norms(self, sphere_grid):
        """‖Z₀^{d−i}Z₁^i‖² = 2π·i!(d−i)!/(d+1)!"""
        d = 4
        gram = gram_matrix(SectionBasis(d), Density(None, {}), sphere_grid)

        expected = [
            TWO_PI * factorial(i) * factorial(d - i) / factorial(d + 1)
            for i in range(d + 1)
        ]
        np.testing.assert_allclose(np.real(np.diag(gram.entries)), expected, rtol=1e-9)
        assert gram.off_diagonal_ratio() < 1e-9
        # Jacobi 縮放後單項式 Gram 近似單位矩陣
        assert gram.condition_number() == pytest.approx(1.0, abs=1e-6)

    def test_fs_kernel_constant(self, sphere_grid):
        """FS 度量的 Bergman 核為常數 (d+1)/2π"""
        d = 3
        basis = SectionBasis(d)
        gram = gram_matrix(basis, Density(None, {}), sphere_grid)

        result = bergman_density(basis, gram, sphere_grid)

        np.testing.assert_allclose(
            result.log_kernel, np.log((d + 1) / TWO_PI), atol=1e-8
        )
        assert not result.used_fallback
        assert result.path_discrepancy < 1e-8

    def test_coherent_trace(self, sphere_grid):
        """節點求積下 ∫ K·μ = dim"""
        basis = SectionBasis(4, "coherent")
        gram = gram_matrix(basis, Density(None, {}), sphere_grid)

        result = bergman_density(basis, gram, sphere_grid)

        assert result.trace_integral(gram, sphere_grid) == pytest.approx(5.0, rel=1e-8)

    def test_extremal_property(self, sphere_grid):
        """K(x) = max |σ(x)|²/‖σ‖²"""
        basis = SectionBasis(3)
        gram = gram_matrix(basis, Density(None, {}), sphere_grid)
        nodes = [0, 5, sphere_grid.size // 2, sphere_grid.size - 1]

        kernel = bergman_density(basis, gram, sphere_grid).log_kernel[nodes]

        np.testing.assert_allclose(
            extremal_value(basis, gram, sphere_grid, nodes), kernel, atol=1e-8
        )

    def test_weight_with_pole(self, sphere_grid):
        """度量極點 c 給出測度冪次 −c"""
        weight = MetricWeight(None, {0: Fraction(1, 2)}, QLineBundle(Fraction(1)))

        gram = gram_matrix(SectionBasis(2), weight, sphere_grid)

        assert gram.measure.exponents == {0: -0.5}
        assert gram.min_eigenvalue() > 0

    def test_nonintegrable(self, sphere_grid):
        """不可積的極點"""
        weight = MetricWeight(None, {0: Fraction(1)}, QLineBundle(Fraction(1)))

        with pytest.raises(NonIntegrableWeightError) as exc_info:
            gram_matrix(SectionBasis(2), weight, sphere_grid)
        assert exc_info.value.point == 0


@pytest.mark.unit
class TestIntegrability:
    """測試可積性判定"""

    def test_check_integrable(self):
        """冪次 ≤ −1 命名極點"""
        check_integrable({0: -0.5, 1: Fraction(-5, 6)})
        with pytest.raises(NonIntegrableWeightError) as exc_info:
            check_integrable({0: -0.5, 2: -1})
        assert exc_info.value.point == 2

    @pytest.mark.parametrize(
        "orders,exponents,expected",
        [
            ({}, {0: Fraction(-1, 2)}, True),
            ({}, {0: Fraction(-1)}, False),
            ({0: 1}, {0: Fraction(-3, 2)}, True),
            ({0: 1}, {0: Fraction(-2)}, False),
        ],
    )
    def test_multiplier_membership(self, orders, exponents, expected):
        """ord_p(σ) + e_p > −1"""
        assert multiplier_membership(orders, exponents) is expected


@pytest.mark.unit
class TestBergmanSystem:
    """測試雙重迭代的記帳"""

    def test_singular_degrees(self, klt_pair, klt_grid):
        """a = 6，每步次數 3，扭轉次數 2"""
        system = BergmanSystem.singular(klt_pair, grid=klt_grid)

        assert system.a == 6
        assert system.t == Fraction(5, 6)
        assert system.step_degree == 3
        assert system.bundle_degree(4) == 14
        assert system.pack.exponents == {0: -5 / 6, 1: -5 / 6, 2: -5 / 6}

    def test_a_must_clear_denominators(self, klt_pair, klt_grid):
        """a 必須消去 D 的分母"""
        with pytest.raises(DegreeBookkeepingError):
            BergmanSystem.singular(klt_pair, a=4, grid=klt_grid)

    def test_lc_rejected(self, lc_pair, klt_grid):
        """LC 對"""
        with pytest.raises(InvalidDivisorError):
            BergmanSystem.singular(lc_pair, grid=klt_grid)

    def test_singular_twist_rejected(self, klt_pair, klt_grid):
        """扭轉必須光滑"""
        twist = MetricWeight(None, {0: Fraction(1)}, QLineBundle(Fraction(2)))

        with pytest.raises(DegreeBookkeepingError):
            BergmanSystem.singular(klt_pair, grid=klt_grid, twist=twist)

    def test_smooth_class_check(self, sphere_grid):
        """ω₀ 的次數必須為 a·deg(K_X + L)"""
        drift = MetricWeight(None, {}, QLineBundle(Fraction(3)))

        with pytest.raises(DegreeBookkeepingError):
            BergmanSystem.smooth(
                sphere_grid, drift, MetricWeight(None, {}, QLineBundle(1)), 2
            )
        system = BergmanSystem.smooth(
            sphere_grid, drift, MetricWeight(None, {}, QLineBundle(2)), 2
        )
        assert system.step_degree == 2


@pytest.mark.unit
class TestVolume:
    """測試體積不變量"""

    def test_matches_zariski(self, klt_pair):
        """曲線上 μ = deg P"""
        volume = volume_mu(klt_pair)

        assert volume.mu == Fraction(1, 2)
        assert volume.matches_zariski
        assert volume.a == 6

    def test_bad_a(self, klt_pair):
        """a 無法消去分母"""
        with pytest.raises(DegreeBookkeepingError):
            volume_mu(klt_pair, a=4)

    def test_too_few_ells(self, klt_pair):
        """至少兩個 ℓ"""
        with pytest.raises(ValueError):
            volume_mu(klt_pair, ells=(4,))


@pytest.mark.unit
class TestScaledLimitInput:
    """測試縮放極限的輸入檢查"""

    def _run(self, grid, ell_max):
        system = BergmanSystem.smooth(
            grid,
            MetricWeight(None, {}, QLineBundle(Fraction(3))),
            MetricWeight(None, {}, QLineBundle(Fraction(2))),
            2,
        )
        return run_inner(system, ell_max, settings=BergmanSettings(basis="monomial"))

    def test_too_few_states(self, sphere_grid):
        """擬合至少需要四個內層狀態"""
        run = self._run(sphere_grid, 3)

        with pytest.raises(BergmanError, match="at least 4"):
            scaled_limit(run)

    def test_unknown_estimator(self, sphere_grid):
        run = self._run(sphere_grid, 4)

        with pytest.raises(BergmanError, match="Unknown"):
            scaled_limit(run, "median")

    def test_bad_ell_max(self, sphere_grid):
        with pytest.raises(ValueError):
            self._run(sphere_grid, 0)
