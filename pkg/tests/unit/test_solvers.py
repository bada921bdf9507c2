"""
求解器與 Ricci 迭代的輸入檢查與記帳測試
"""

from fractions import Fraction

import numpy as np
import pytest

from kelab.core.exceptions import (
    ClassMismatchError,
    InvalidDivisorError,
    NotBigError,
    ScheduleError,
    TraceTooShortError,
)
from kelab.geometry.model import LogDivisor, LogPair, QLineBundle
from kelab.geometry.weights import MetricWeight
from kelab.solvers.ma_solver import (
    PerturbationSchedule,
    auxiliary_weight,
    orbifold_potential,
    require_klt,
)
from kelab.solvers.ricci_iteration import (
    IterationTrace,
    alpha_sequence,
    area_recursion,
    contraction_report,
    iterate_smooth,
    uniqueness_check,
)


@pytest.mark.unit
class TestPerturbationSchedule:
    """測試 δ 排程"""

    def test_geometric(self):
        """幾何排程每步減半"""
        schedule = PerturbationSchedule.geometric(0.5, 0.05)

        assert schedule.delta_values == (0.5, 0.25, 0.125, 0.0625)

    def test_direct(self):
        """空排程"""
        schedule = PerturbationSchedule.direct()

        assert schedule.delta_values == ()
        assert not schedule.has_E

    @pytest.mark.parametrize(
        "values", [(0.5, 0.5), (0.1, 0.2), (0.5, 0.0), (0.5, -0.1)]
    )
    def test_invalid_values(self, values):
        """非嚴格遞減或非正"""
        with pytest.raises(ScheduleError):
            PerturbationSchedule(values)

    def test_invalid_epsilon(self):
        """ε 必須為正"""
        with pytest.raises(ScheduleError):
            PerturbationSchedule((0.5,), epsilon=0.0)


@pytest.mark.unit
class TestKLTInputs:
    """測試 KLT 求解器的輸入"""

    def test_lc_rejected(self, lc_pair):
        """LC 對由極限掃描處理"""
        with pytest.raises(InvalidDivisorError):
            require_klt(lc_pair)

    def test_not_big_rejected(self, three_point_model):
        """deg(K_X + D) ≤ 0"""
        pair = LogPair(three_point_model, LogDivisor.uniform(range(3), "2/3"))

        with pytest.raises(NotBigError):
            require_klt(pair)

    def test_klt_accepted(self, klt_pair):
        """KLT 對數一般型"""
        require_klt(klt_pair)

    def test_auxiliary_weight(self, three_point_model):
        """輔助除子 E 的度量"""
        pair = LogPair(
            three_point_model,
            LogDivisor.uniform(range(3), "5/6"),
            LogDivisor.from_mapping({1: "1/2"}),
        )

        weight = auxiliary_weight(pair)

        assert weight is not None
        assert weight.pole_coefficients == {1: Fraction(1, 2)}
        assert weight.degree == Fraction(1, 2)

    def test_no_auxiliary(self, klt_pair):
        """沒有 E"""
        assert auxiliary_weight(klt_pair) is None

    def test_orbifold_potential(self, klt_pair, klt_grid):
        """Λ 非負且有限"""
        value = orbifold_potential(klt_grid, klt_pair, 0.01)

        assert np.all(value >= 0)
        assert np.all(np.isfinite(value))


@pytest.mark.unit
class TestIterationBookkeeping:
    """測試 Ricci 迭代的精確記帳"""

    def test_alpha_sequence(self):
        """α_m = (1/a)·t^{m−1}"""
        assert alpha_sequence(2, 3) == [
            Fraction(1, 2),
            Fraction(1, 4),
            Fraction(1, 8),
        ]

    def test_alpha_partial_sums(self):
        """Σ α_m = 1 − t^n"""
        alphas = alpha_sequence(3, 10)

        assert sum(alphas) == 1 - Fraction(2, 3) ** 10

    def test_area_recursion(self):
        """A_m = κ + t·A_{m−1}"""
        assert area_recursion(Fraction(0), Fraction(1), Fraction(1, 2), 3) == [
            0,
            1,
            Fraction(3, 2),
            Fraction(7, 4),
        ]

    def test_area_limit(self):
        """A_m → κ/(1 − t)"""
        areas = area_recursion(Fraction(1), Fraction(1, 2), Fraction(4, 5), 200)

        assert float(areas[-1]) == pytest.approx(2.5)


def _trace(sup_diffs, inf_diffs, a=2):
    trace = IterationTrace(a=a, t=Fraction(a - 1, a))
    trace.sup_diffs = list(sup_diffs)
    trace.inf_diffs = list(inf_diffs)
    return trace


@pytest.mark.unit
class TestContractionReport:
    """測試收縮比報告"""

    def test_geometric_decay(self):
        """比值恰為 t"""
        trace = _trace([1.0, 0.5, 0.25, 0.125], [-1.0, -0.5, -0.25, -0.125])

        report = contraction_report(trace)

        assert report.passed
        assert report.bound == 0.5
        assert report.fitted_ratio == pytest.approx(0.5)
        assert report.last_diff == 0.125
        assert [row["m"] for row in report.rows] == [2, 3, 4]

    def test_violation(self):
        """比值超過 t + slack"""
        trace = _trace([1.0, 0.9, 0.8], [0.0, 0.0, 0.0])

        report = contraction_report(trace, slack=0.02)

        assert not report.passed
        assert not report.rows[0]["ok"]

    def test_noise_floor(self):
        """低於雜訊下限的差分不檢查"""
        trace = _trace([1e-10, 1e-10, 1e-10], [0.0, 0.0, 0.0])

        report = contraction_report(trace)

        assert report.passed
        assert not any(row["checked"] for row in report.rows)

    def test_too_short(self):
        """軌跡少於 3 步"""
        with pytest.raises(TraceTooShortError):
            contraction_report(_trace([1.0, 0.5], [-1.0, -0.5]))


@pytest.mark.unit
class TestIterationInputs:
    """測試迭代的輸入檢查"""

    def test_smooth_not_big(self, sphere_grid):
        """deg(K_X + L) ≤ 0"""
        drift = MetricWeight(None, {}, QLineBundle(Fraction(2)))
        omega0 = MetricWeight(None, {}, QLineBundle(Fraction(1)))

        with pytest.raises(NotBigError):
            iterate_smooth(sphere_grid, drift, omega0, 2, m_max=3)

    def test_bad_a(self, sphere_grid):
        """a 必須為正整數"""
        drift = MetricWeight(None, {}, QLineBundle(Fraction(3)))
        omega0 = MetricWeight(None, {}, QLineBundle(Fraction(1)))

        with pytest.raises(ValueError):
            iterate_smooth(sphere_grid, drift, omega0, 0, m_max=3)

    def test_uniqueness_class_mismatch(self, klt_pair, klt_grid):
        """參考權重必須度量 K_X + D"""
        good = MetricWeight(None, {}, klt_pair.log_canonical)
        wrong = MetricWeight(None, {}, QLineBundle(Fraction(1)))

        with pytest.raises(ClassMismatchError):
            uniqueness_check(klt_pair, 6, [good, wrong], grid=klt_grid)
