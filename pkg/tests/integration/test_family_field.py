"""
族的相對密度場與多重次調和性檢驗

底方格取 5×5，x 網格解析度 16。
"""

import numpy as np
import pytest

from kelab.core.config import FamilySettings
from kelab.family.variation import (
    FamilySpec,
    FiberWeightPack,
    family_grid,
    fiber_bergman_psh_test,
    psh_test,
    restriction_defect,
    solve_family,
)

COARSE_BASE = FamilySettings(base_nodes=5)


@pytest.fixture(scope="module")
def product_spec() -> FamilySpec:
    return FamilySpec.four_point(moving=False, settings=COARSE_BASE)


@pytest.fixture(scope="module")
def product_field(product_spec):
    grid = family_grid(product_spec, 16)
    return solve_family(product_spec, grid, 1e-8)


@pytest.mark.integration
@pytest.mark.slow
class TestProductFamily:
    """乘積族：所有纖維相同"""

    def test_constant_in_y(self, product_field):
        """每個底節點的密度列都相同"""
        assert product_field.complete
        assert len(product_field.base) == 13
        spread = np.ptp(product_field.log_density, axis=0)
        assert float(np.max(spread)) == 0.0

    def test_areas(self, product_field):
        """纖維面積 = 2π·deg(K_X + D) = 8π/3"""
        assert product_field.expected_area == pytest.approx(8.0 * np.pi / 3.0)
        assert product_field.area_defect < 1e-6
        assert product_field.areas_nonnegative

    def test_restriction_defect(self, product_field):
        """場的切片等於獨立求解的纖維"""
        assert restriction_defect(product_field, tol=1e-8) == pytest.approx(
            0.0, abs=1e-10
        )

    def test_dense_table(self, product_field):
        rows = product_field.rows()
        size = product_field.grid.size

        assert len(rows) == 13 * size
        assert rows[size + 7]["log_density"] == pytest.approx(
            product_field.log_density[1, 7]
        )

    def test_psh(self, product_field):
        """y 方向沒有變分：最小特徵值為 min(纖維項, 0)"""
        report = psh_test(product_field)

        assert report.evaluated > 0
        assert report.max_mixed_term == 0.0
        assert report.min_eigenvalue == pytest.approx(
            min(report.min_fiber_term, 0.0), abs=1e-6
        )
        assert report.bounded_above
        assert len(report.base_rows) == 5


@pytest.mark.integration
@pytest.mark.slow
class TestMovingFamily:
    """移動點 p(y) = −1 + y 的族"""

    def test_field(self):
        spec = FamilySpec.four_point(settings=COARSE_BASE)

        density_field = solve_family(spec, resolution=16, tol=1e-8)

        assert density_field.complete
        assert density_field.area_defect < 1e-6
        center = density_field.fiber(0j)
        edge = density_field.fiber(complex(0.3, 0.0))
        assert float(np.max(np.abs(center - edge))) > 1e-3

        report = psh_test(density_field)
        assert report.evaluated > 0
        assert report.bounded_above
        assert len(report.base_rows) == 5


@pytest.mark.integration
@pytest.mark.slow
class TestFiberBergmanControl:
    """纖維 Bergman 核與反號漂移的對照組"""

    def test_sign_flip_fails(self, product_spec):
        """漂移 −|y|² 使 y 方向的 Hessian 約為 −1"""
        grid = family_grid(product_spec, 16)

        positive = fiber_bergman_psh_test(
            product_spec, pack=FiberWeightPack(), grid=grid
        )
        negative = fiber_bergman_psh_test(
            product_spec, pack=FiberWeightPack(sign=-1), grid=grid
        )

        assert negative.details["sign"] == -1
        assert negative.details["degree"] == 10
        assert not negative.passed
        assert negative.min_eigenvalue <= -0.99
        assert positive.min_eigenvalue >= negative.min_eigenvalue
