"""
族變分的資料結構測試
"""

from fractions import Fraction

import numpy as np
import pytest

from kelab.core.exceptions import InvalidDivisorError, NotBigError
from kelab.family.variation import (
    FamilySpec,
    PSHReport,
    RelativeDensityField,
    psh_test,
)
from kelab.geometry.model import PairClass


@pytest.mark.unit
class TestFamilySpec:
    """測試族的描述"""

    def test_four_point(self):
        """{0, 1, ∞} 加上移動點"""
        spec = FamilySpec.four_point()

        assert spec.moving_index == 3
        assert spec.classification == PairClass.KLT
        assert spec.divisor.degree == Fraction(10, 3)
        assert spec.expected_area == pytest.approx(2.0 * np.pi * 4.0 / 3.0)

    def test_moving_point(self):
        """p(y) = anchor + y；乘積族不移動"""
        assert FamilySpec.four_point().moving_point(0.25j) == complex(-1.0, 0.25)
        assert FamilySpec.four_point(moving=False).moving_point(0.25j) == -1.0

    def test_base_points(self):
        """11×11 方格落在圓盤內的節點"""
        spec = FamilySpec.four_point()

        points = spec.base_points()

        assert len(points) == 81
        assert all(abs(y) <= spec.base_radius * (1 + 1e-9) for _, _, y in points)
        assert (5, 5, 0j) in points

    @pytest.mark.parametrize("nodes", [2, 10])
    def test_invalid_base_nodes(self, nodes):
        """底方格節點數必須為奇數且至少 3"""
        with pytest.raises(ValueError):
            FamilySpec((0j,), (Fraction(1, 2),), Fraction(1, 2), base_nodes=nodes)

    def test_invalid_radius(self):
        """底圓盤半徑必須為正"""
        with pytest.raises(ValueError):
            FamilySpec((0j,), (Fraction(1, 2),), Fraction(1, 2), base_radius=0.0)

    def test_coefficient_count(self):
        """每個靜態點都需要係數"""
        with pytest.raises(InvalidDivisorError):
            FamilySpec((0j, None), (Fraction(1, 2),), Fraction(1, 2))

    def test_regularity(self):
        """纖維點相撞時不屬於 Y₀"""
        spec = FamilySpec.four_point()

        assert spec.is_regular(0j)
        assert not spec.is_regular(1 + 0j)

    def test_require_regular_not_big(self):
        """四點 1/2：deg(K_X + D) = 0"""
        with pytest.raises(NotBigError):
            FamilySpec.four_point(Fraction(1, 2)).require_regular()

    def test_require_regular_ok(self):
        FamilySpec.four_point().require_regular()

    def test_to_dict(self):
        data = FamilySpec.four_point().to_dict()

        assert data["static_points"][2] == "inf"
        assert data["moving_coefficient"] == "5/6"


@pytest.mark.unit
class TestPSH:
    """測試多重次調和性報告"""

    def _report(self, **overrides):
        values = dict(
            label="canonical",
            min_eigenvalue=-1e-6,
            location=None,
            tolerance=1e-4,
            evaluated=10,
            excluded=2,
            min_fiber_term=0.1,
            max_mixed_term=0.01,
            boundary_sup=1.0,
            interior_sup=0.5,
        )
        values.update(overrides)
        return PSHReport(**values)

    def test_passed_within_tolerance(self):
        """最小特徵值 ≥ −tol"""
        assert self._report().passed
        assert not self._report(min_eigenvalue=-1e-3).passed

    def test_nothing_evaluated(self):
        """沒有評估節點不算通過"""
        assert not self._report(evaluated=0).passed

    def test_bounded_above(self):
        assert self._report().bounded_above
        assert not self._report(boundary_sup=float("inf")).bounded_above

    def test_incomplete_field(self, sphere_grid):
        """場不完整時拒絕檢驗"""
        density_field = RelativeDensityField(
            spec=FamilySpec.four_point(),
            grid=sphere_grid,
            base=[(0, 0, 0j)],
            log_density=np.full((1, sphere_grid.size), np.nan),
            areas=np.array([np.nan]),
            failed=[0j],
        )

        with pytest.raises(ValueError, match="complete field"):
            psh_test(density_field)


@pytest.mark.unit
class TestFieldRows:
    """測試相對密度場的稠密表"""

    def test_dense_table(self, sphere_grid):
        """每個 (y, x 節點) 一列；失敗纖維為 NaN"""
        log_density = np.vstack(
            [np.linspace(0.0, 1.0, sphere_grid.size), np.full(sphere_grid.size, np.nan)]
        )
        density_field = RelativeDensityField(
            spec=FamilySpec.four_point(),
            grid=sphere_grid,
            base=[(0, 0, 0j), (1, 0, 0.1 + 0j)],
            log_density=log_density,
            areas=np.array([1.0, np.nan]),
            failed=[0.1 + 0j],
        )

        rows = density_field.rows()

        assert len(rows) == 2 * sphere_grid.size
        assert set(rows[0]) == {
            "i",
            "j",
            "y_re",
            "y_im",
            "node",
            "s",
            "phi",
            "log_density",
        }
        assert rows[3]["node"] == 3
        assert rows[3]["log_density"] == pytest.approx(log_density[0, 3])
        second = rows[sphere_grid.size :]
        assert all(row["i"] == 1 and row["y_re"] == 0.1 for row in second)
        assert all(np.isnan(row["log_density"]) for row in second)
