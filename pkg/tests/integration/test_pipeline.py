"""
端對端數值流程測試

在小網格上執行真實的求解器；較慢，以 slow 標記。
"""

from fractions import Fraction

import numpy as np
import pytest

from kelab.geometry.model import QLineBundle
from kelab.geometry.weights import MetricWeight
from kelab.harness.config import validate_run_config
from kelab.harness.runner import run_config
from kelab.harness.store import RunStatus, read_run_records, verify_manifest
from kelab.solvers.ma_solver import solve_canonical_KE_klt
from kelab.solvers.ricci_iteration import iterate_smooth


@pytest.mark.integration
@pytest.mark.slow
class TestRicciFixedPoint:
    """FS 資料下 Ricci 迭代停在 FS 度量"""

    def test_fubini_study_fixed_point(self, sphere_grid):
        drift = MetricWeight(None, {}, QLineBundle(Fraction(3)))
        omega0 = MetricWeight(None, {}, QLineBundle(Fraction(2)))

        trace = iterate_smooth(sphere_grid, drift, omega0, 2, m_max=60)

        assert trace.converged
        assert not trace.failed
        assert all(area == Fraction(2) for area in trace.areas)
        limit = trace.limit_log_density()
        assert np.ptp(limit) < 1e-6
        mass = float(np.sum(sphere_grid.weights * np.exp(limit)))
        assert mass == pytest.approx(2.0 * np.pi, rel=1e-6)


@pytest.mark.integration
@pytest.mark.slow
class TestCanonicalSolve:
    """KLT 對的直接求解"""

    def test_area_matches_degree(self, klt_pair, klt_grid):
        """面積 = 2π·deg(K_X + D)"""
        result = solve_canonical_KE_klt(klt_pair, grid=klt_grid)

        assert result.final.converged
        assert result.final.target_area == pytest.approx(np.pi)
        assert result.final.area == pytest.approx(np.pi, rel=1e-6)
        assert np.all(np.isfinite(result.final.log_density))


@pytest.mark.integration
@pytest.mark.slow
class TestRunDirectory:
    """真實實驗寫出的執行目錄"""

    def test_solve_run(self, solve_config_data, test_settings, tmp_path):
        config = validate_run_config(solve_config_data)

        record = run_config(config, tmp_path, test_settings)

        assert record.status == RunStatus.OK
        assert record.error is None
        assert "gauss_bonnet_area" in {check.name for check in record.checks}
        assert verify_manifest(tmp_path / record.run_dir) == []
        assert [r.name for r in read_run_records(tmp_path)] == ["solve_three_point"]
        assert (tmp_path / record.run_dir / "summary.json").exists()
