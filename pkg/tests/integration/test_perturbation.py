"""
δ 延拓、幾乎有界性與奇異 Ricci 迭代的數值測試
"""

from fractions import Fraction

import numpy as np
import pytest

from kelab.discretization.grid import grid_for_pair
from kelab.geometry.model import LogDivisor, LogPair, MarkedSphereModel
from kelab.solvers.ma_solver import (
    PerturbationSchedule,
    almost_boundedness_report,
    auxiliary_weight,
    solve_canonical_KE_klt,
)
from kelab.solvers.ricci_iteration import iterate_singular

DELTAS = (0.2, 0.1, 0.05)


@pytest.fixture(scope="module")
def perturbed_pair() -> LogPair:
    """{0, 1, ∞} 係數 5/6，E = ¼·[−1]"""
    return LogPair(
        MarkedSphereModel((0j, 1 + 0j, None, -1 + 0j)),
        LogDivisor.uniform(range(3), Fraction(5, 6)),
        LogDivisor.from_mapping({3: Fraction(1, 4)}),
    )


@pytest.fixture(scope="module")
def perturbed_result(perturbed_pair):
    schedule = PerturbationSchedule(DELTAS, 1e-2, auxiliary_weight(perturbed_pair))
    return solve_canonical_KE_klt(
        perturbed_pair, schedule, grid_for_pair(perturbed_pair, 16), 1e-9
    )


@pytest.mark.integration
@pytest.mark.slow
class TestDeltaContinuation:
    """E 非空時擾動密度沿 δ 逐節點非遞增"""

    def test_trace_covers_schedule(self, perturbed_result):
        assert [report.delta for report in perturbed_result.trace] == list(DELTAS)
        assert all(report.converged for report in perturbed_result.trace)
        assert perturbed_result.final.converged

    @pytest.mark.parametrize("larger,smaller", list(zip(DELTAS, DELTAS[1:])))
    def test_monotone_between_deltas(self, perturbed_result, larger, smaller):
        assert perturbed_result.monotonicity_margin(larger, smaller) >= -1e-8

    def test_monotone_to_zero(self, perturbed_result):
        """δ = 0 的密度不低於最小的擾動密度"""
        final = perturbed_result.final.log_density
        last = perturbed_result.trace[-1].log_density

        assert float(np.min(final - last)) >= -1e-8

    def test_final_area(self, perturbed_result):
        """δ = 0 面積為 2π·deg(K_X + D) = π"""
        assert perturbed_result.final.area == pytest.approx(np.pi, rel=1e-6)


@pytest.mark.integration
@pytest.mark.slow
class TestAlmostBoundedness:
    """u ≤ C₊ 與 u ≥ C₋(δ₀) + δ₀·log‖σ_E‖²"""

    def test_constants(self, perturbed_pair, perturbed_result):
        report = perturbed_result.final
        u = report.potential.values
        E_weight = auxiliary_weight(perturbed_pair)
        log_sigma = E_weight.section_log_norm(report.grid)

        bounds = almost_boundedness_report(report, E_weight, [0.1, 0.05])

        assert bounds.verified
        assert bounds.c_plus == pytest.approx(float(np.max(u)))
        assert set(bounds.c_minus) == {0.1, 0.05}
        for delta0, c in bounds.c_minus.items():
            assert c == pytest.approx(float(np.min(u - delta0 * log_sigma)))

    def test_without_E(self, klt_pair, klt_grid):
        """E 為空時 C₋ 就是 inf u"""
        report = solve_canonical_KE_klt(klt_pair, grid=klt_grid).final

        bounds = almost_boundedness_report(report, None, [0.1])

        assert bounds.verified
        assert bounds.c_minus[0.1] == pytest.approx(
            float(np.min(report.potential.values))
        )


@pytest.mark.integration
@pytest.mark.slow
class TestSingularIteration:
    """KLT 對上的奇異 Ricci 迭代收斂到典範密度"""

    @pytest.fixture
    def trace(self, klt_pair, klt_grid):
        return iterate_singular(klt_pair, m_max=200, tol=1e-6, grid=klt_grid)

    def test_converges(self, trace):
        assert trace.converged
        assert not trace.failed
        assert trace.a == 6
        assert trace.t == Fraction(5, 6)

    def test_background_degree(self, trace):
        """每步背景次數 a·deg(K_X + D) = 3"""
        assert all(area == Fraction(3) for area in trace.areas)

    def test_mass_bound(self, trace):
        """奇異度量 h_m 的質量受 AM–GM 面積界控制"""
        assert trace.mass_bound_checks
        assert all(trace.mass_bound_checks)

    def test_limit_matches_canonical(self, trace, klt_pair, klt_grid):
        """(1 − t)·ω_m 收斂到典範體積形式"""
        canonical = solve_canonical_KE_klt(klt_pair, grid=klt_grid).final

        np.testing.assert_allclose(
            trace.limit_log_density(), canonical.log_density, atol=1e-4
        )

    def test_delta_runs(self, trace):
        """沒有排程時只執行 δ = 0"""
        assert [run["delta"] for run in trace.delta_runs] == [0.0]
