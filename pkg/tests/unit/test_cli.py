"""
CLI 測試

以 click 的 CliRunner 測試子命令與結束碼。
"""

import pytest
from click.testing import CliRunner

from kelab.cli.main import EXIT_FAILED, EXIT_OK, EXIT_USAGE, cli
from kelab.harness.experiments import ExperimentOutcome


@pytest.fixture
def runner():
    return CliRunner()


def passing_execute(config, settings, seed=None):
    outcome = ExperimentOutcome(summaries={"name": config.name})
    outcome.check("area", True, criterion=2, value=0.0, threshold=1e-10)
    return outcome


def failing_execute(config, settings, seed=None):
    outcome = ExperimentOutcome()
    outcome.check("area", False, criterion=2, value=1.0, threshold=1e-10)
    return outcome


@pytest.mark.unit
class TestCLI:
    """測試 CLI 子命令"""

    def test_version(self, runner):
        """版本信息"""
        result = runner.invoke(cli, ["version"])

        assert result.exit_code == EXIT_OK
        assert "kelab v0.1.0" in result.output

    def test_run_unknown_key(self, runner, solve_config_data, write_config, tmp_path):
        """配置驗證失敗回報鍵名並以 1 結束"""
        solve_config_data["solver"]["gamma"] = 2.0
        path = write_config(solve_config_data)

        result = runner.invoke(cli, ["run", "-c", str(path), "--out", str(tmp_path)])

        assert result.exit_code == EXIT_USAGE
        assert "gamma" in result.output
        assert not (tmp_path / "runs.jsonl").exists()

    def test_run_missing_config(self, runner, tmp_path):
        """配置檔不存在"""
        result = runner.invoke(
            cli, ["run", "-c", str(tmp_path / "missing.json"), "--out", str(tmp_path)]
        )

        assert result.exit_code == EXIT_USAGE

    def test_run_success(
        self, runner, monkeypatch, solve_config_data, write_config, tmp_path
    ):
        """成功的執行以 0 結束"""
        monkeypatch.setattr("kelab.harness.runner.execute", passing_execute)
        path = write_config(solve_config_data)
        out = tmp_path / "out"

        result = runner.invoke(cli, ["run", "-c", str(path), "--out", str(out)])

        assert result.exit_code == EXIT_OK
        assert "所有檢查通過" in result.output
        assert (out / "solve_three_point" / "manifest.json").exists()

    def test_run_failed_check(
        self, runner, monkeypatch, solve_config_data, write_config, tmp_path
    ):
        """檢查失敗以 2 結束"""
        monkeypatch.setattr("kelab.harness.runner.execute", failing_execute)
        path = write_config(solve_config_data)

        result = runner.invoke(
            cli, ["run", "-c", str(path), "--out", str(tmp_path / "out")]
        )

        assert result.exit_code == EXIT_FAILED
        assert "1 項檢查失敗" in result.output

    def test_report_empty(self, runner, tmp_path):
        """空目錄"""
        result = runner.invoke(cli, ["report", str(tmp_path)])

        assert result.exit_code == EXIT_OK
        assert "no runs" in result.output
        assert not (tmp_path / "acceptance_matrix.csv").exists()

    def test_report_after_run(
        self, runner, monkeypatch, solve_config_data, write_config, tmp_path
    ):
        """執行後的報告"""
        monkeypatch.setattr("kelab.harness.runner.execute", passing_execute)
        out = tmp_path / "out"
        path = write_config(solve_config_data)
        runner.invoke(cli, ["run", "-c", str(path), "--out", str(out)])

        result = runner.invoke(cli, ["report", str(out), "--format", "json"])

        assert result.exit_code == EXIT_OK
        assert '"passed": true' in result.output
        assert (out / "acceptance_matrix.csv").exists()

    def test_report_tampered(
        self, runner, monkeypatch, solve_config_data, write_config, tmp_path
    ):
        """完整性失敗以 2 結束"""
        monkeypatch.setattr("kelab.harness.runner.execute", passing_execute)
        out = tmp_path / "out"
        path = write_config(solve_config_data)
        runner.invoke(cli, ["run", "-c", str(path), "--out", str(out)])
        (out / "solve_three_point" / "checks.csv").write_text("tampered\r\n")

        result = runner.invoke(cli, ["report", str(out)])

        assert result.exit_code == EXIT_FAILED
        assert "sha256 mismatch" in result.output

    def test_sweep_empty_grid(
        self, runner, monkeypatch, solve_config_data, write_config, tmp_path
    ):
        """空掃描網格"""
        monkeypatch.setattr("kelab.harness.runner.execute", passing_execute)
        solve_config_data["sweep"] = {"grid": {"t": []}}
        path = write_config(solve_config_data)

        result = runner.invoke(
            cli, ["sweep", "-c", str(path), "--out", str(tmp_path), "--workers", "1"]
        )

        assert result.exit_code == EXIT_OK
        assert "掃描網格為空" in result.output

    def test_classify(self, runner, solve_config_data, write_config):
        """分類三點 5/6 對數對"""
        result = runner.invoke(
            cli, ["classify", "-c", str(write_config(solve_config_data))]
        )

        assert result.exit_code == EXIT_OK
        assert "klt" in result.output
        assert "1/2" in result.output

    def test_settings_file(self, runner, tmp_path):
        """全域配置文件"""
        settings_file = tmp_path / "settings.yaml"
        settings_file.write_text("grid:\n  resolution: 33\n", encoding="utf-8")

        result = runner.invoke(cli, ["--settings", str(settings_file), "doctor"])

        assert result.exit_code == EXIT_USAGE
        assert "even" in result.output

    @pytest.mark.parametrize("command", [["doctor"], ["acceptance", "--quick"]])
    def test_missing_settings_file(self, runner, tmp_path, command):
        """全域配置文件不存在時以使用錯誤結束"""
        missing = tmp_path / "missing.yaml"

        result = runner.invoke(cli, ["--settings", str(missing), *command])

        assert result.exit_code == EXIT_USAGE
        assert "配置加載失敗" in result.output
        assert not isinstance(result.exception, FileNotFoundError)
