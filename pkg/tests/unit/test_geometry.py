"""
標記球面幾何測試

測試除子分類、次數、叢集指數與 Zariski 分解。
"""

from fractions import Fraction

import numpy as np
import pytest

from kelab.core.exceptions import InvalidDivisorError, NotBigError
from kelab.geometry.model import (
    LogDivisor,
    LogPair,
    MarkedSphereModel,
    PairClass,
    QLineBundle,
    as_fraction,
    chordal_sq,
    classify_pair,
    derived_cluster_exponent,
    zariski_decompose,
)


@pytest.mark.unit
class TestMarkedSphereModel:
    """測試標記點模型"""

    def test_from_config(self):
        """配置格式：[re, im]、數字與 inf"""
        model = MarkedSphereModel.from_config([[0, 0], 1, "inf", [0, 2]])

        assert model.points == (0j, 1 + 0j, None, 2j)
        assert model.zero_index == 0
        assert model.infinity_index == 2
        assert model.affine_indices() == [1, 3]

    def test_duplicate_points_rejected(self):
        """標記點必須互不相同"""
        with pytest.raises(InvalidDivisorError):
            MarkedSphereModel((1 + 0j, 1 + 0j))

    def test_labels(self, three_point_model):
        """標籤"""
        assert [three_point_model.label(i) for i in range(3)] == ["0", "1", "inf"]


@pytest.mark.unit
class TestLogDivisor:
    """測試對數除子"""

    def test_zero_coefficients_dropped(self):
        """係數為 0 的項被移除"""
        divisor = LogDivisor(((0, Fraction(1, 2)), (1, Fraction(0))))

        assert divisor.indices == [0]
        assert divisor.coefficient_at(1) == 0

    def test_duplicate_index_rejected(self):
        """同一標記點不能出現兩次"""
        with pytest.raises(InvalidDivisorError):
            LogDivisor(((0, Fraction(1, 2)), (0, Fraction(1, 3))))

    @pytest.mark.parametrize(
        "coefficients,expected",
        [
            (["5/6", "5/6", "5/6"], PairClass.KLT),
            (["1", "1", "1"], PairClass.LC),
            (["1", "1/2"], PairClass.LC),
            (["3/2"], PairClass.INVALID),
        ],
    )
    def test_classification(self, coefficients, expected):
        """KLT / LC / invalid"""
        divisor = LogDivisor(tuple(enumerate(Fraction(c) for c in coefficients)))

        assert divisor.classification == expected

    def test_degree_and_denominator(self):
        """三點 5/6：次數 5/2，分母 6"""
        divisor = LogDivisor.uniform(range(3), "5/6")

        assert divisor.degree == Fraction(5, 2)
        assert divisor.denominator == 6

    def test_scaled(self):
        """t·D"""
        divisor = LogDivisor.uniform(range(3), 1).scaled(Fraction(9, 10))

        assert divisor.classification == PairClass.KLT
        assert divisor.coefficient_at(2) == Fraction(9, 10)

    def test_cluster_exponents(self):
        """b 為滿足 d < (b−1)/b 的最小整數"""
        assert derived_cluster_exponent(Fraction(1, 2)) == 3
        assert derived_cluster_exponent(Fraction(5, 6)) == 7
        assert derived_cluster_exponent(Fraction(1)) is None
        assert derived_cluster_exponent(0) == 1


@pytest.mark.unit
class TestExactRationals:
    """測試有理數輸入"""

    def test_strings_and_ints(self):
        """字串與整數"""
        assert as_fraction("5/6") == Fraction(5, 6)
        assert as_fraction(2) == Fraction(2)

    @pytest.mark.parametrize("value", [0.5, True])
    def test_float_and_bool_rejected(self, value):
        """浮點數與布林值不是精確係數"""
        with pytest.raises(TypeError):
            as_fraction(value)

    def test_line_bundle_arithmetic(self):
        """K_X + 次數 5/2"""
        bundle = QLineBundle.canonical() + QLineBundle(Fraction(5, 2))

        assert bundle.degree == Fraction(1, 2)
        assert not bundle.is_genuine
        assert bundle.scaled(2).is_genuine


@pytest.mark.unit
class TestClassifyPair:
    """測試 classify_pair"""

    def test_klt_pair(self, klt_pair):
        """三點 5/6 為 KLT 且為對數一般型"""
        report = classify_pair(klt_pair.model, klt_pair.divisor)

        assert report.classification == PairClass.KLT
        assert report.degree == Fraction(1, 2)
        assert report.log_general_type
        assert report.denominator == 6
        assert klt_pair.log_canonical.degree == Fraction(1, 2)

    def test_lc_pair(self, lc_pair):
        """三次穿孔球面"""
        report = classify_pair(lc_pair.model, lc_pair.divisor)

        assert report.classification == PairClass.LC
        assert report.degree == 1
        assert report.cluster_exponents == {0: None, 1: None, 2: None}

    def test_invalid_coefficient_rejected(self, three_point_model):
        """係數 > 1"""
        divisor = LogDivisor.from_mapping({0: "3/2"})

        with pytest.raises(InvalidDivisorError) as exc_info:
            classify_pair(three_point_model, divisor)
        assert "3/2" in str(exc_info.value)

    def test_unknown_point_rejected(self, three_point_model):
        """參照不存在的標記點"""
        with pytest.raises(InvalidDivisorError):
            LogPair(three_point_model, LogDivisor.from_mapping({5: "1/2"}))


@pytest.mark.unit
class TestZariski:
    """測試 Zariski 分解"""

    def test_big_class(self, klt_pair):
        """曲線上 N 為空"""
        data = zariski_decompose(klt_pair)

        assert data.is_big
        assert data.p_degree == Fraction(1, 2)
        assert data.n_degree == 0
        data.require_big()

    def test_not_big(self, three_point_model):
        """次數 ≤ 0 的類別被拒絕"""
        pair = LogPair(three_point_model, LogDivisor.uniform(range(3), "1/2"))
        data = zariski_decompose(pair)

        assert not data.is_big
        with pytest.raises(NotBigError):
            data.require_big()


@pytest.mark.unit
def test_chordal_distance_at_poles():
    """χ² 在標記點為 0，在對極點為 1"""
    s = np.array([-np.inf, 0.0, np.inf])
    phi = np.zeros(3)

    to_zero = chordal_sq(s, phi, 0j)
    to_infinity = chordal_sq(s, phi, None)

    np.testing.assert_allclose(to_zero, [0.0, 0.5, 1.0])
    np.testing.assert_allclose(to_infinity, [1.0, 0.5, 0.0])
