"""
實驗配置測試

測試 JSON 配置的驗證、雜湊與掃描格點展開。
"""

import pytest

from kelab.core.exceptions import ConfigValidationError
from kelab.harness.config import (
    ExperimentKind,
    load_run_config,
    validate_run_config,
)


@pytest.mark.unit
class TestValidateRunConfig:
    """測試配置驗證"""

    def test_minimal_solve(self, solve_config_data):
        """最小 solve 配置"""
        config = validate_run_config(solve_config_data)

        assert config.kind == ExperimentKind.SOLVE.value
        assert config.solver.resolution == 16
        assert config.geometry.pair().degree == 0.5

    def test_unknown_key_rejected(self, solve_config_data):
        """未知鍵回報鍵名"""
        solve_config_data["solver"]["gamma"] = 1.0

        with pytest.raises(ConfigValidationError) as exc_info:
            validate_run_config(solve_config_data)
        assert exc_info.value.key == "solver.gamma"
        assert "unknown key" in str(exc_info.value)

    def test_coefficient_count_mismatch(self, solve_config_data):
        """係數數量與標記點不符"""
        solve_config_data["geometry"]["coefficients"] = ["5/6", "5/6"]

        with pytest.raises(ConfigValidationError) as exc_info:
            validate_run_config(solve_config_data)
        assert exc_info.value.key == "geometry.coefficients"

    def test_non_rational_coefficient(self, solve_config_data):
        """係數必須是有理數字串"""
        solve_config_data["geometry"]["coefficients"][0] = "five sixths"

        with pytest.raises(ConfigValidationError) as exc_info:
            validate_run_config(solve_config_data)
        assert "geometry.coefficients" in exc_info.value.key

    def test_duplicate_points(self, solve_config_data):
        """重複標記點"""
        solve_config_data["geometry"]["points"] = [[1, 0], [1, 0], "inf"]

        with pytest.raises(ConfigValidationError) as exc_info:
            validate_run_config(solve_config_data)
        assert exc_info.value.key == "geometry"

    @pytest.mark.parametrize("t", ["0", "3/2", "-1/2"])
    def test_t_out_of_range(self, solve_config_data, t):
        """t 必須落在 (0, 1]"""
        solve_config_data["solver"]["t_values"] = ["1/2", t]

        with pytest.raises(ConfigValidationError):
            validate_run_config(solve_config_data)

    def test_output_escape_rejected(self, solve_config_data):
        """輸出子目錄不能離開輸出根目錄"""
        solve_config_data["harness"] = {"output": "../elsewhere"}

        with pytest.raises(ConfigValidationError) as exc_info:
            validate_run_config(solve_config_data)
        assert exc_info.value.key == "harness.output"

    def test_unknown_sweep_axis(self, solve_config_data):
        """掃描軸必須是允許的參數"""
        solve_config_data["sweep"] = {"grid": {"gamma": [1, 2]}}

        with pytest.raises(ConfigValidationError):
            validate_run_config(solve_config_data)

    def test_not_an_object(self):
        """頂層必須是物件"""
        with pytest.raises(ConfigValidationError):
            validate_run_config([1, 2, 3])

    def test_geometry_required(self):
        """solve 需要幾何區塊"""
        config = validate_run_config({"kind": "solve"})

        with pytest.raises(ConfigValidationError) as exc_info:
            config.require_geometry()
        assert exc_info.value.key == "geometry"


@pytest.mark.unit
class TestRunConfigHashing:
    """測試配置雜湊"""

    def test_hash_stable(self, solve_config_data):
        """同一配置的雜湊相同，與鍵順序無關"""
        reordered = dict(reversed(list(solve_config_data.items())))

        first = validate_run_config(solve_config_data).config_hash()
        second = validate_run_config(reordered).config_hash()

        assert first == second
        assert len(first) == 64

    def test_hash_changes_with_content(self, solve_config_data):
        """內容改變雜湊也改變"""
        before = validate_run_config(solve_config_data).config_hash()
        solve_config_data["solver"]["resolution"] = 32

        assert validate_run_config(solve_config_data).config_hash() != before


@pytest.mark.unit
class TestSweepCells:
    """測試掃描格點"""

    def test_cells_sorted_product(self, solve_config_data):
        """依鍵排序的笛卡兒積"""
        solve_config_data["sweep"] = {
            "grid": {"resolution": [16, 32], "a": [2, 3]}
        }
        config = validate_run_config(solve_config_data)

        cells = list(config.sweep.cells())

        assert cells == [
            {"a": 2, "resolution": 16},
            {"a": 2, "resolution": 32},
            {"a": 3, "resolution": 16},
            {"a": 3, "resolution": 32},
        ]

    def test_empty_axis(self, solve_config_data):
        """空軸產生空網格"""
        solve_config_data["sweep"] = {"grid": {"a": []}}
        config = validate_run_config(solve_config_data)

        assert config.sweep.empty
        assert list(config.sweep.cells()) == []

    def test_with_cell(self, solve_config_data):
        """格點覆寫求解參數並命名子執行"""
        solve_config_data["sweep"] = {"grid": {"t": ["9/10"]}}
        config = validate_run_config(solve_config_data)

        cell = config.with_cell({"t": "9/10", "resolution": 32})

        assert cell.name == "solve_three_point_resolution-32_t-9_10"
        assert cell.solver.t_values == ["9/10"]
        assert cell.solver.resolution == 32
        assert cell.sweep is None


@pytest.mark.unit
class TestLoadRunConfig:
    """測試配置檔載入"""

    def test_load(self, solve_config_data, write_config):
        """讀取 JSON"""
        config = load_run_config(write_config(solve_config_data))

        assert config.name == "solve_three_point"

    def test_missing_file(self, tmp_path):
        """檔案不存在"""
        with pytest.raises(FileNotFoundError):
            load_run_config(tmp_path / "missing.json")

    def test_invalid_json(self, tmp_path):
        """JSON 無法解析"""
        path = tmp_path / "broken.json"
        path.write_text("{not json", encoding="utf-8")

        with pytest.raises(ConfigValidationError) as exc_info:
            load_run_config(path)
        assert "invalid JSON" in str(exc_info.value)
