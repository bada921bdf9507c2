"""
實驗執行器

run / sweep / report / acceptance 的實作。每次執行寫入自己的目錄並產生
一筆 RunRecord；模組錯誤只會產生失敗紀錄，不會中止程序。
"""

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from joblib import Parallel, delayed

from ..core.config import Settings, get_settings
from ..core.exceptions import ConfigValidationError, KelabError
from ..core.logging import get_logger, run_context
from .acceptance import CRITERIA, CRITERION_TITLES, run_acceptance
from .config import ExperimentKind, RunConfig, load_run_config, validate_run_config
from .experiments import ExperimentOutcome, execute
from .store import (
    RunRecord,
    RunStatus,
    RunStore,
    append_run_record,
    read_run_records,
    utc_now,
    verify_manifest,
)

logger = get_logger(__name__)

AGGREGATE_NAME = "aggregate.csv"
MATRIX_NAME = "acceptance_matrix.csv"

# 模組錯誤與數值例外都轉為失敗紀錄
RECOVERABLE_ERRORS = (KelabError, ValueError, ArithmeticError, np.linalg.LinAlgError)


def resolve_seed(
    config: RunConfig, settings: Settings, seed: Optional[int] = None
) -> int:
    """命令列種子 > 配置種子 > 全域預設"""
    if seed is not None:
        return seed
    if config.harness.seed is not None:
        return config.harness.seed
    return settings.harness.seed


def run_directory(config: RunConfig, out_dir: Path) -> Path:
    return Path(out_dir) / config.harness.output / config.name


def run_config(
    config: RunConfig,
    out_dir: Union[str, Path],
    settings: Optional[Settings] = None,
    *,
    seed: Optional[int] = None,
    workers: int = 1,
    append: bool = True,
) -> RunRecord:
    """
    執行單一配置並寫入其執行目錄

    Args:
        config: 已驗證的配置
        out_dir: 輸出根目錄（runs.jsonl 所在處）
        settings: 全域配置
        seed: 覆寫種子
        workers: 驗收套件的並行工作數
        append: 是否附加到 runs.jsonl（掃描的子工作由父程序附加）

    Returns:
        RunRecord: 執行紀錄；失敗時 status 為 failed
    """
    settings = settings or get_settings()
    root = Path(out_dir)
    run_dir = run_directory(config, root)
    seed = resolve_seed(config, settings, seed)
    record = RunRecord(
        name=config.name,
        kind=str(config.kind),
        config_hash=config.config_hash(),
        started_at=utc_now(),
        seed=seed,
        run_dir=run_dir.relative_to(root).as_posix(),
    )
    store = RunStore(run_dir)
    start = time.perf_counter()
    try:
        with run_context(run=config.name, kind=record.kind, seed=seed):
            if config.kind == ExperimentKind.FULL_ACCEPTANCE.value:
                outcome = run_acceptance(
                    settings, quick=config.harness.quick, seed=seed, workers=workers
                )
            else:
                outcome = execute(config, settings, seed)
    except RECOVERABLE_ERRORS as e:
        logger.error(
            "Experiment failed", name=config.name, kind=record.kind, error=str(e)
        )
        record.status = RunStatus.FAILED
        record.error = f"{type(e).__name__}: {e}"
        outcome = ExperimentOutcome(summaries={"error": record.error})

    store.write_json("config.json", config.model_dump(mode="json"))
    outcome.write(store)
    store.finalize()

    record.finished_at = utc_now()
    record.summaries = outcome.summaries
    record.checks = outcome.checks
    record.manifest = dict(store.manifest)
    record.timings = {**outcome.timings, "wall": time.perf_counter() - start}
    if append:
        append_run_record(root, record)
    logger.info(
        "Run finished",
        name=record.name,
        status=record.status,
        passed=record.passed,
        run_dir=str(run_dir),
    )
    return record


def run(
    config_path: Union[str, Path],
    out_dir: Optional[Union[str, Path]] = None,
    *,
    settings: Optional[Settings] = None,
    seed: Optional[int] = None,
    workers: int = 1,
) -> RunRecord:
    """
    讀取配置檔並執行

    Raises:
        FileNotFoundError: 配置檔不存在
        ConfigValidationError: 配置不合法
    """
    settings = settings or get_settings()
    config = load_run_config(config_path)
    return run_config(
        config,
        out_dir or settings.harness.output_dir,
        settings,
        seed=seed,
        workers=workers,
    )


@dataclass
class SweepResult:
    """掃描結果與聚合表位置"""

    records: List[RunRecord] = field(default_factory=list)
    cells: List[Dict[str, Any]] = field(default_factory=list)
    aggregate_path: Optional[Path] = None

    @property
    def failed(self) -> List[RunRecord]:
        return [record for record in self.records if not record.passed]

    @property
    def partial_failure(self) -> bool:
        return bool(self.failed)


def aggregate_rows(
    cells: List[Dict[str, Any]], records: List[RunRecord]
) -> List[Dict[str, Any]]:
    """每格一列：參數、狀態、各檢查的數值與判定"""
    rows = []
    for cell, record in zip(cells, records):
        row: Dict[str, Any] = {
            **{key: str(value) for key, value in cell.items()},
            "name": record.name,
            "status": record.status,
            "passed": record.passed,
            "failed_checks": sum(1 for c in record.checks if c.passed is False),
            "error": record.error,
        }
        for check in record.checks:
            row[check.name] = check.value
            row[f"{check.name}_verdict"] = check.verdict
        rows.append(row)
    return rows


def sweep_config(
    config: RunConfig,
    out_dir: Union[str, Path],
    settings: Optional[Settings] = None,
    *,
    workers: int = 1,
    seed: Optional[int] = None,
) -> SweepResult:
    """
    在笛卡兒參數網格上並行執行

    子工作只寫入各自的目錄；runs.jsonl 與聚合表由父程序寫入。

    Raises:
        ConfigValidationError: 驗收種類不能掃描
    """
    if config.kind == ExperimentKind.FULL_ACCEPTANCE.value:
        raise ConfigValidationError(
            "kind: full-acceptance cannot be swept", key="kind"
        )
    settings = settings or get_settings()
    root = Path(out_dir)
    cells = list(config.sweep.cells()) if config.sweep is not None else []
    cell_configs = [config.with_cell(cell) for cell in cells]
    logger.info("Sweep started", name=config.name, cells=len(cells), workers=workers)

    records: List[RunRecord] = list(
        Parallel(n_jobs=workers)(
            delayed(run_config)(cell_config, root, settings, seed=seed, append=False)
            for cell_config in cell_configs
        )
    )
    for record in records:
        append_run_record(root, record)

    axes = sorted(config.sweep.grid) if config.sweep is not None else []
    rows = aggregate_rows(cells, records)
    headers = None if rows else [*axes, "name", "status", "passed", "failed_checks"]
    store = RunStore(run_directory(config, root))
    path = store.write_csv(AGGREGATE_NAME, rows, headers)
    store.finalize()

    result = SweepResult(records=records, cells=cells, aggregate_path=path)
    logger.info(
        "Sweep finished",
        name=config.name,
        cells=len(cells),
        failed=len(result.failed),
    )
    return result


def sweep(
    config_path: Union[str, Path],
    out_dir: Optional[Union[str, Path]] = None,
    *,
    settings: Optional[Settings] = None,
    workers: int = 1,
    seed: Optional[int] = None,
) -> SweepResult:
    settings = settings or get_settings()
    config = load_run_config(config_path)
    return sweep_config(
        config,
        out_dir or settings.harness.output_dir,
        settings,
        workers=workers,
        seed=seed,
    )


def acceptance(
    out_dir: Union[str, Path],
    settings: Optional[Settings] = None,
    *,
    quick: bool = False,
    seed: Optional[int] = None,
    workers: int = 1,
) -> RunRecord:
    """以內建配置執行判準 1–14"""
    config = validate_run_config(
        {
            "kind": ExperimentKind.FULL_ACCEPTANCE.value,
            "name": "acceptance-quick" if quick else "acceptance",
            "harness": {"quick": quick, "seed": seed},
        }
    )
    return run_config(config, out_dir, settings, seed=seed, workers=workers)


# ----------------------------------------------------------------------
# 報告
# ----------------------------------------------------------------------


@dataclass
class Report:
    """彙整後的報告"""

    records: List[RunRecord]
    matrix: List[Dict[str, Any]]
    problems: Dict[str, List[str]]
    matrix_path: Optional[Path] = None

    @property
    def empty(self) -> bool:
        return not self.records

    @property
    def integrity_ok(self) -> bool:
        return not any(self.problems.values())

    @property
    def passed(self) -> bool:
        return (
            not self.empty
            and self.integrity_ok
            and all(record.passed for record in self.records)
        )

    def run_rows(self) -> List[Dict[str, Any]]:
        rows = []
        for record in self.records:
            rows.append(
                {
                    "name": record.name,
                    "kind": record.kind,
                    "status": record.status,
                    "checks": len(record.checks),
                    "failed": sum(1 for c in record.checks if c.passed is False),
                    "integrity": "FAIL" if self.problems.get(record.run_dir) else "ok",
                }
            )
        return rows

    def to_dict(self) -> Dict[str, Any]:
        return {
            "runs": self.run_rows(),
            "matrix": self.matrix,
            "problems": self.problems,
            "passed": self.passed,
        }


def acceptance_matrix(records: List[RunRecord]) -> List[Dict[str, Any]]:
    """
    判準 × 判定矩陣

    某判準沒有任何檢查時為 NA；任一檢查失敗為 FAIL；否則為 PASS。
    """
    rows = []
    for number in CRITERIA:
        checks = [
            check
            for record in records
            for check in record.checks
            if check.criterion == number
        ]
        counts = {
            verdict: sum(1 for c in checks if c.verdict == verdict)
            for verdict in ("PASS", "FAIL", "NA")
        }
        if not checks or counts["PASS"] + counts["FAIL"] == 0:
            verdict = "NA"
        elif counts["FAIL"]:
            verdict = "FAIL"
        else:
            verdict = "PASS"
        rows.append(
            {
                "criterion": number,
                "title": CRITERION_TITLES[number],
                "verdict": verdict,
                **counts,
            }
        )
    return rows


def report(run_root: Union[str, Path]) -> Report:
    """
    彙整輸出根目錄中的所有紀錄

    Args:
        run_root: 含 runs.jsonl 的目錄

    Returns:
        Report: 紀錄、驗收矩陣與完整性問題；空目錄回傳空報告且不寫檔
    """
    root = Path(run_root)
    records = read_run_records(root)
    if not records:
        return Report(records=[], matrix=[], problems={})

    problems = {
        record.run_dir: verify_manifest(root / record.run_dir) for record in records
    }
    matrix = acceptance_matrix(records)
    store = RunStore(root)
    path = store.write_csv(
        MATRIX_NAME, matrix, ["criterion", "title", "verdict", "PASS", "FAIL", "NA"]
    )
    flagged = sum(1 for issues in problems.values() if issues)
    if flagged:
        logger.warning("Integrity problems found", runs=flagged)
    return Report(records=records, matrix=matrix, problems=problems, matrix_path=path)
