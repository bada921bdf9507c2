"""
實驗執行器測試

以替身實驗測試執行目錄、失敗紀錄、掃描聚合與報告。
"""

import json

import pytest

from kelab.core.exceptions import ConfigValidationError, SolverDivergenceError
from kelab.harness.config import validate_run_config
from kelab.harness.experiments import ExperimentOutcome
from kelab.harness.runner import (
    AGGREGATE_NAME,
    MATRIX_NAME,
    acceptance_matrix,
    report,
    resolve_seed,
    run,
    run_config,
    sweep_config,
)
from kelab.harness.store import CheckResult, RunRecord, RunStatus, read_run_records


def fake_execute(config, settings, seed=None):
    """依求解參數 a 決定結果的替身實驗"""
    if config.solver.a == 3:
        raise SolverDivergenceError("Newton stalled", residual=1.0)
    outcome = ExperimentOutcome(summaries={"a": config.solver.a, "seed": seed})
    outcome.check("area", True, criterion=2, value=1e-13, threshold=1e-10)
    outcome.check("lc", None, criterion=11)
    outcome.tables["table.csv"] = [{"step": 1, "value": 0.5}]
    return outcome


@pytest.fixture
def patched_execute(monkeypatch):
    monkeypatch.setattr("kelab.harness.runner.execute", fake_execute)


@pytest.mark.unit
class TestRunConfig:
    """測試單一執行"""

    def test_successful_run(
        self, patched_execute, tmp_path, test_settings, solve_config_data
    ):
        """成功的執行寫出目錄與紀錄"""
        config = validate_run_config(solve_config_data)

        record = run_config(config, tmp_path, test_settings, seed=11)

        run_dir = tmp_path / "solve_three_point"
        assert record.status == RunStatus.OK
        assert record.passed
        assert record.seed == 11
        assert record.run_dir == "solve_three_point"
        assert "wall" in record.timings
        assert sorted(record.manifest) == [
            "checks.csv",
            "config.json",
            "summary.json",
            "table.csv",
        ]
        assert json.loads((run_dir / "summary.json").read_text()) == {
            "a": None,
            "seed": 11,
        }
        assert read_run_records(tmp_path) == [record]

    def test_timings_not_written(
        self, patched_execute, tmp_path, test_settings, solve_config_data
    ):
        """計時只在 runs.jsonl 中"""
        config = validate_run_config(solve_config_data)

        run_config(config, tmp_path, test_settings)

        summary = (tmp_path / "solve_three_point" / "summary.json").read_text()
        assert "wall" not in summary

    def test_module_error_becomes_failed_record(
        self, patched_execute, tmp_path, test_settings, solve_config_data
    ):
        """模組錯誤產生失敗紀錄而不是拋出"""
        solve_config_data["solver"]["a"] = 3
        config = validate_run_config(solve_config_data)

        record = run_config(config, tmp_path, test_settings)

        assert record.status == RunStatus.FAILED
        assert not record.passed
        assert record.error.startswith("SolverDivergenceError")
        assert record.summaries == {"error": record.error}
        assert (tmp_path / "solve_three_point" / "manifest.json").exists()

    def test_run_from_file(
        self, patched_execute, tmp_path, test_settings, solve_config_data, write_config
    ):
        """從配置檔執行"""
        path = write_config(solve_config_data)

        record = run(path, tmp_path / "out", settings=test_settings)

        assert record.passed
        assert (tmp_path / "out" / "runs.jsonl").exists()

    def test_output_subdirectory(
        self, patched_execute, tmp_path, test_settings, solve_config_data
    ):
        """harness.output 指定子目錄"""
        solve_config_data["harness"] = {"output": "nested/dir"}
        config = validate_run_config(solve_config_data)

        record = run_config(config, tmp_path, test_settings)

        assert record.run_dir == "nested/dir/solve_three_point"
        assert (tmp_path / record.run_dir / "checks.csv").exists()


@pytest.mark.unit
class TestResolveSeed:
    """測試種子優先順序"""

    def test_precedence(self, test_settings, solve_config_data):
        """命令列 > 配置 > 全域"""
        plain = validate_run_config(solve_config_data)
        solve_config_data["harness"] = {"seed": 5}
        seeded = validate_run_config(solve_config_data)

        assert resolve_seed(seeded, test_settings, 9) == 9
        assert resolve_seed(seeded, test_settings) == 5
        assert resolve_seed(plain, test_settings) == test_settings.harness.seed


@pytest.mark.unit
class TestSweep:
    """測試參數掃描"""

    def test_partial_failure(
        self, patched_execute, tmp_path, test_settings, solve_config_data
    ):
        """單一格點失敗不影響其他格點"""
        solve_config_data["sweep"] = {"grid": {"a": [2, 3, 5]}}
        config = validate_run_config(solve_config_data)

        result = sweep_config(config, tmp_path, test_settings, workers=1)

        assert [r.status for r in result.records] == ["ok", "failed", "ok"]
        assert result.partial_failure
        assert len(result.failed) == 1
        assert len(read_run_records(tmp_path)) == 3
        aggregate = result.aggregate_path.read_text(encoding="utf-8").splitlines()
        assert aggregate[0].startswith("a,name,status,passed,failed_checks,error")
        assert len(aggregate) == 4

    def test_empty_grid(
        self, patched_execute, tmp_path, test_settings, solve_config_data
    ):
        """空網格只寫出表頭"""
        solve_config_data["sweep"] = {"grid": {"a": []}}
        config = validate_run_config(solve_config_data)

        result = sweep_config(config, tmp_path, test_settings)

        assert result.records == []
        assert not result.partial_failure
        assert result.aggregate_path.name == AGGREGATE_NAME
        assert result.aggregate_path.read_bytes() == (
            b"a,name,status,passed,failed_checks\r\n"
        )
        assert read_run_records(tmp_path) == []

    def test_acceptance_cannot_be_swept(self, tmp_path, test_settings):
        """驗收套件不能掃描"""
        config = validate_run_config(
            {"kind": "full-acceptance", "sweep": {"grid": {"a": [2]}}}
        )

        with pytest.raises(ConfigValidationError) as exc_info:
            sweep_config(config, tmp_path, test_settings)
        assert exc_info.value.key == "kind"


def _record(name, checks, status=RunStatus.OK):
    return RunRecord(
        name=name, kind="solve", config_hash="0" * 64, status=status, checks=checks
    )


@pytest.mark.unit
class TestAcceptanceMatrix:
    """測試驗收矩陣"""

    def test_verdicts(self):
        """全部 PASS、任一 FAIL、沒有檢查或只有 NA"""
        records = [
            _record(
                "one",
                [
                    CheckResult(name="a", passed=True, criterion=1),
                    CheckResult(name="b", passed=True, criterion=2),
                    CheckResult(name="c", passed=None, criterion=11),
                ],
            ),
            _record("two", [CheckResult(name="d", passed=False, criterion=2)]),
        ]

        matrix = {row["criterion"]: row for row in acceptance_matrix(records)}

        assert len(matrix) == 14
        assert matrix[1]["verdict"] == "PASS"
        assert matrix[2]["verdict"] == "FAIL"
        assert (matrix[2]["PASS"], matrix[2]["FAIL"]) == (1, 1)
        assert matrix[11]["verdict"] == "NA"
        assert matrix[11]["NA"] == 1
        assert matrix[14]["verdict"] == "NA"


@pytest.mark.unit
class TestReport:
    """測試報告"""

    def test_empty_directory(self, tmp_path):
        """空目錄不寫檔"""
        result = report(tmp_path)

        assert result.empty
        assert not result.passed
        assert not (tmp_path / MATRIX_NAME).exists()

    def test_report_after_runs(
        self, patched_execute, tmp_path, test_settings, solve_config_data
    ):
        """報告彙整紀錄並寫出矩陣"""
        run_config(validate_run_config(solve_config_data), tmp_path, test_settings)

        result = report(tmp_path)

        assert result.integrity_ok
        assert result.passed
        assert result.matrix_path == tmp_path / MATRIX_NAME
        rows = {row["criterion"]: row for row in result.matrix}
        assert rows[2]["verdict"] == "PASS"
        assert result.run_rows()[0]["integrity"] == "ok"
        assert result.to_dict()["passed"] is True

    def test_tampered_run(
        self, patched_execute, tmp_path, test_settings, solve_config_data
    ):
        """被修改的輸出檔案被偵測"""
        run_config(validate_run_config(solve_config_data), tmp_path, test_settings)
        (tmp_path / "solve_three_point" / "table.csv").write_text("x\r\n")

        result = report(tmp_path)

        assert not result.integrity_ok
        assert not result.passed
        assert result.problems["solve_three_point"] == ["table.csv: sha256 mismatch"]
        assert result.run_rows()[0]["integrity"] == "FAIL"
