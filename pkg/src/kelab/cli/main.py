"""
kelab CLI 主入口

run / sweep / report / acceptance 等子命令。
結束碼：0 全部通過，1 配置或使用錯誤，2 執行完成但有失敗的紀錄或檢查。
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Optional

import click
from dotenv import load_dotenv
from tabulate import tabulate

from ..core.config import (
    Settings,
    get_settings,
    load_config_from_file,
    settings_from_mapping,
    validate_config,
)
from ..core.exceptions import ConfigValidationError, HarnessError
from ..core.logging import setup_logging
from ..harness.config import load_run_config
from ..harness.experiments import classification_rows
from ..harness.runner import acceptance as run_acceptance_suite
from ..harness.runner import acceptance_matrix, report as build_report
from ..harness.runner import run as run_experiment
from ..harness.runner import sweep as run_sweep
from ..harness.store import RunRecord

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILED = 2


# 確保能從工作目錄或其父層正確載入 .env
def load_env_safely() -> None:
    search_root = Path.cwd()
    for _ in range(5):  # 限制最多往上 5 層
        env_file = search_root / ".env"
        if env_file.exists():
            load_dotenv(dotenv_path=env_file, override=True)
            break
        search_root = search_root.parent


load_env_safely()


def _settings(ctx: click.Context) -> Settings:
    """載入全域配置；檔案不存在或格式錯誤時以使用錯誤結束"""
    path = ctx.obj.get("settings_path")
    try:
        if path:
            return settings_from_mapping(load_config_from_file(path))
        return get_settings()
    except (FileNotFoundError, ValueError) as e:
        click.echo(f"❌ 配置加載失敗: {e}", err=True)
        ctx.exit(EXIT_USAGE)


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.3e}"
    return str(value)


def _echo_checks(record: RunRecord) -> None:
    if not record.checks:
        return
    rows = [
        [
            check.criterion or "",
            check.name,
            check.verdict,
            _fmt(check.value),
            _fmt(check.threshold),
        ]
        for check in record.checks
    ]
    click.echo(
        tabulate(
            rows,
            headers=["判準", "檢查", "判定", "數值", "門檻"],
            tablefmt="grid",
        )
    )


def _echo_record(record: RunRecord, out_dir: Path) -> None:
    _echo_checks(record)
    click.echo(f"📁 輸出目錄: {out_dir / record.run_dir}")
    if record.error:
        click.echo(f"❌ 執行失敗: {record.error}")
    elif record.passed:
        click.echo(f"✅ {record.name}: 所有檢查通過")
    else:
        failed = sum(1 for c in record.checks if c.passed is False)
        click.echo(f"⚠️  {record.name}: {failed} 項檢查失敗")


def _echo_matrix(matrix: List[Dict[str, Any]]) -> None:
    rows = [
        [row["criterion"], row["title"], row["verdict"], row["PASS"], row["FAIL"]]
        for row in matrix
    ]
    click.echo(
        tabulate(
            rows, headers=["判準", "性質", "判定", "PASS", "FAIL"], tablefmt="grid"
        )
    )


@click.group()
@click.option("--settings", "-s", "settings_path", help="全域配置文件路徑 (YAML/JSON)")
@click.option("--verbose", "-v", is_flag=True, help="詳細輸出")
@click.pass_context
def cli(ctx: click.Context, settings_path: Optional[str], verbose: bool) -> None:
    """kelab 典範 Kähler–Einstein 電流數值實驗室"""
    ctx.ensure_object(dict)
    ctx.obj["settings_path"] = settings_path
    ctx.obj["verbose"] = verbose

    # 設置日誌
    log_level = "DEBUG" if verbose else "WARNING"
    setup_logging(level=log_level, format_type="console")


@cli.command()
@click.pass_context
def doctor(ctx: click.Context) -> None:
    """診斷配置與數值環境"""
    click.echo("🔍 kelab 環境診斷")
    click.echo("=" * 50)

    settings = _settings(ctx)
    click.echo(f"✅ 配置加載成功 (環境: {settings.environment})")
    overlay = settings.config_file_path
    state = "已套用" if overlay.exists() else "不存在，使用預設值"
    click.echo(f"   - 環境配置檔: {overlay} ({state})")

    errors = validate_config(settings)
    if errors:
        click.echo("❌ 配置驗證失敗:")
        for error in errors:
            click.echo(f"   - {error}")
        ctx.exit(EXIT_USAGE)
        return
    click.echo("✅ 配置驗證通過")

    import joblib
    import mpmath
    import numpy
    import scipy

    click.echo("\n📦 數值套件:")
    for name, module in (
        ("numpy", numpy),
        ("scipy", scipy),
        ("mpmath", mpmath),
        ("joblib", joblib),
    ):
        click.echo(f"   - {name} {module.__version__}")

    output = Path(settings.harness.output_dir)
    click.echo(f"\n📁 輸出目錄: {output.resolve()}")
    click.echo(f"   - 工作數: {settings.harness.workers}")
    click.echo(f"   - 網格環數: {settings.grid.resolution}")
    click.echo("\n🎉 診斷完成!")


@cli.command()
@click.option("--config", "-c", "config_path", required=True, help="實驗配置 (JSON)")
@click.option("--out", "out_dir", default=None, help="輸出根目錄")
@click.option("--seed", default=None, type=int, help="亂數種子")
@click.option("--workers", default=None, type=int, help="並行工作數")
@click.pass_context
def run(
    ctx: click.Context,
    config_path: str,
    out_dir: Optional[str],
    seed: Optional[int],
    workers: Optional[int],
) -> None:
    """執行單一實驗配置"""
    settings = _settings(ctx)
    root = Path(out_dir or settings.harness.output_dir)
    try:
        record = run_experiment(
            config_path,
            root,
            settings=settings,
            seed=seed,
            workers=workers or settings.harness.workers,
        )
    except FileNotFoundError as e:
        click.echo(f"❌ {e}", err=True)
        ctx.exit(EXIT_USAGE)
        return
    except ConfigValidationError as e:
        click.echo(f"❌ 配置驗證失敗: {e}", err=True)
        ctx.exit(EXIT_USAGE)
        return

    click.echo(f"🧪 {record.kind}: {record.name} (config {record.config_hash[:12]})")
    _echo_record(record, root)
    ctx.exit(EXIT_OK if record.passed else EXIT_FAILED)


@cli.command()
@click.option("--config", "-c", "config_path", required=True, help="含 sweep 的配置")
@click.option("--out", "out_dir", default=None, help="輸出根目錄")
@click.option("--workers", default=None, type=int, help="並行工作數")
@click.option("--seed", default=None, type=int, help="亂數種子")
@click.pass_context
def sweep(
    ctx: click.Context,
    config_path: str,
    out_dir: Optional[str],
    workers: Optional[int],
    seed: Optional[int],
) -> None:
    """在參數網格上並行執行"""
    settings = _settings(ctx)
    root = Path(out_dir or settings.harness.output_dir)
    try:
        result = run_sweep(
            config_path,
            root,
            settings=settings,
            workers=workers or settings.harness.workers,
            seed=seed,
        )
    except FileNotFoundError as e:
        click.echo(f"❌ {e}", err=True)
        ctx.exit(EXIT_USAGE)
        return
    except ConfigValidationError as e:
        click.echo(f"❌ 配置驗證失敗: {e}", err=True)
        ctx.exit(EXIT_USAGE)
        return

    if not result.records:
        click.echo("📭 掃描網格為空")
    else:
        rows = [
            [
                ", ".join(f"{k}={v}" for k, v in cell.items()),
                record.status,
                sum(1 for c in record.checks if c.passed is False),
                record.error or "",
            ]
            for cell, record in zip(result.cells, result.records)
        ]
        click.echo(
            tabulate(rows, headers=["格點", "狀態", "失敗檢查", "錯誤"], tablefmt="grid")
        )
    click.echo(f"📊 聚合表: {result.aggregate_path}")
    if result.partial_failure:
        click.echo(f"⚠️  {len(result.failed)}/{len(result.records)} 個格點失敗")
        ctx.exit(EXIT_FAILED)
    click.echo("✅ 掃描完成")


@cli.command()
@click.argument("run_dir", type=click.Path(file_okay=False))
@click.option(
    "--format",
    "output_format",
    default="table",
    type=click.Choice(["table", "json"]),
    help="輸出格式",
)
@click.pass_context
def report(ctx: click.Context, run_dir: str, output_format: str) -> None:
    """彙整執行目錄並產生驗收矩陣"""
    try:
        result = build_report(run_dir)
    except HarnessError as e:
        click.echo(f"❌ 無法讀取紀錄: {e}", err=True)
        ctx.exit(EXIT_USAGE)
        return

    if output_format == "json":
        click.echo(json.dumps(result.to_dict(), indent=2, ensure_ascii=False))
    elif result.empty:
        click.echo("📭 no runs: 目錄中沒有執行紀錄")
    else:
        click.echo(tabulate(result.run_rows(), headers="keys", tablefmt="grid"))
        _echo_matrix(result.matrix)
        click.echo(f"📊 驗收矩陣: {result.matrix_path}")

    if result.empty:
        return
    if not result.integrity_ok:
        click.echo("❌ 完整性檢查失敗:", err=True)
        for run_name, problems in sorted(result.problems.items()):
            for problem in problems:
                click.echo(f"   - {run_name}/{problem}", err=True)
        ctx.exit(EXIT_FAILED)
    if not result.passed:
        ctx.exit(EXIT_FAILED)


@cli.command()
@click.option("--out", "out_dir", default=None, help="輸出根目錄")
@click.option("--workers", default=None, type=int, help="並行工作數")
@click.option("--seed", default=None, type=int, help="亂數種子")
@click.option("--quick", is_flag=True, help="縮小規模的快速版本")
@click.pass_context
def acceptance(
    ctx: click.Context,
    out_dir: Optional[str],
    workers: Optional[int],
    seed: Optional[int],
    quick: bool,
) -> None:
    """執行驗收判準 1–14"""
    settings = _settings(ctx)
    root = Path(out_dir or settings.harness.output_dir)
    click.echo(f"🧪 驗收套件{'（快速）' if quick else ''}開始執行")
    record = run_acceptance_suite(
        root,
        settings,
        quick=quick,
        seed=seed,
        workers=workers or settings.harness.workers,
    )
    _echo_matrix(acceptance_matrix([record]))
    _echo_record(record, root)
    ctx.exit(EXIT_OK if record.passed else EXIT_FAILED)


@cli.command()
@click.option("--config", "-c", "config_path", required=True, help="實驗配置 (JSON)")
@click.pass_context
def classify(ctx: click.Context, config_path: str) -> None:
    """分類配置中的對數對 (KLT / LC / invalid)"""
    try:
        pair = load_run_config(config_path).require_geometry().pair()
    except (FileNotFoundError, ConfigValidationError) as e:
        click.echo(f"❌ {e}", err=True)
        ctx.exit(EXIT_USAGE)
        return
    rows = classification_rows([pair])
    click.echo(tabulate(rows, headers="keys", tablefmt="grid"))


@cli.command()
def version() -> None:
    """顯示版本信息"""
    from .. import __description__, __version__

    click.echo(f"kelab v{__version__}")
    click.echo(__description__)


def main() -> None:
    """CLI 主入口點"""
    cli()


if __name__ == "__main__":
    main()
