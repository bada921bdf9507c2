"""
實驗輸出儲存

CSV 與 JSON 先寫入暫存名稱再以 os.replace 發布；manifest.json 記錄每個檔案的
sha256。runs.jsonl 只由父程序附加。
"""

import csv
import hashlib
import io
import json
import os
from datetime import datetime, timezone
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..core.exceptions import HarnessError, IntegrityError
from ..core.logging import get_logger

logger = get_logger(__name__)

MANIFEST_NAME = "manifest.json"
RUNS_LOG_NAME = "runs.jsonl"


class RunStatus(str, Enum):
    """執行結果"""

    OK = "ok"
    FAILED = "failed"


class CheckResult(BaseModel):
    """單一被斷言性質的結果；passed 為 None 代表不適用"""

    model_config = ConfigDict(extra="forbid")

    name: str
    passed: Optional[bool] = None
    criterion: Optional[int] = Field(default=None, ge=1, le=14)
    value: Optional[float] = None
    threshold: Optional[float] = None
    detail: str = ""

    @property
    def verdict(self) -> str:
        if self.passed is None:
            return "NA"
        return "PASS" if self.passed else "FAIL"


class RunRecord(BaseModel):
    """一次執行的紀錄"""

    model_config = ConfigDict(use_enum_values=True)

    name: str
    kind: str
    config_hash: str
    status: RunStatus = RunStatus.OK
    started_at: str = ""
    finished_at: str = ""
    seed: Optional[int] = None
    error: Optional[str] = None
    summaries: Dict[str, Any] = Field(default_factory=dict)
    checks: List[CheckResult] = Field(default_factory=list)
    manifest: Dict[str, str] = Field(default_factory=dict)
    timings: Dict[str, float] = Field(default_factory=dict)
    run_dir: str = ""

    @property
    def passed(self) -> bool:
        return self.status == RunStatus.OK and all(
            check.passed is not False for check in self.checks
        )


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def format_cell(value: Any) -> str:
    """CSV 欄位：浮點數以 repr 輸出，確保位元一致"""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, complex):
        return f"{value.real!r}{value.imag:+}j"
    return str(value)


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else repr(value)
    if isinstance(value, (Fraction, complex, Enum)):
        return str(value.value if isinstance(value, Enum) else value)
    return value


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


class RunStore:
    """
    單一執行目錄的寫入器

    每個檔案以 `<name>.staging` 寫入後原子地改名；manifest 隨寫入累積，
    finalize 時一次發布。
    """

    def __init__(self, run_dir: Path):
        self.run_dir = Path(run_dir)
        self.manifest: Dict[str, str] = {}
        self.logger = get_logger(f"{__name__}.{self.__class__.__name__}")

    def _publish(self, relative: str, payload: bytes) -> Path:
        target = self.run_dir / relative
        target.parent.mkdir(parents=True, exist_ok=True)
        staging = target.with_name(target.name + ".staging")
        with open(staging, "wb") as f:
            f.write(payload)
            f.flush()
            os.fsync(f.fileno())
        os.replace(staging, target)
        self.manifest[relative] = hashlib.sha256(payload).hexdigest()
        return target

    def write_csv(
        self,
        relative: str,
        rows: Sequence[Dict[str, Any]],
        headers: Optional[Sequence[str]] = None,
    ) -> Path:
        """
        寫入 CSV（RFC-4180，QUOTE_MINIMAL）

        Args:
            relative: 相對於執行目錄的檔名
            rows: 資料列
            headers: 欄位順序（預設為各列鍵的首次出現順序）

        Returns:
            Path: 已發布的檔案
        """
        if headers is None:
            ordered: List[str] = []
            for row in rows:
                for key in row:
                    if key not in ordered:
                        ordered.append(key)
            headers = ordered

        buffer = io.StringIO()
        writer = csv.writer(buffer, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
        writer.writerow(list(headers))
        for row in rows:
            writer.writerow([format_cell(row.get(key)) for key in headers])
        return self._publish(relative, buffer.getvalue().encode("utf-8"))

    def write_json(self, relative: str, data: Any) -> Path:
        payload = json.dumps(_jsonable(data), sort_keys=True, indent=2) + "\n"
        return self._publish(relative, payload.encode("utf-8"))

    def write_profiles(
        self,
        relative: str,
        x: Iterable[float],
        columns: Dict[str, Iterable[float]],
    ) -> Path:
        """繪圖資料：x 對各密度剖面"""
        xs = list(x)
        series = {name: list(values) for name, values in columns.items()}
        rows = [
            {"x": xs[i], **{name: values[i] for name, values in series.items()}}
            for i in range(len(xs))
        ]
        return self.write_csv(relative, rows, ["x", *series])

    def finalize(self) -> Path:
        """發布 manifest.json；manifest 本身不列入自己的雜湊表"""
        payload = json.dumps({"files": self.manifest}, sort_keys=True, indent=2) + "\n"
        target = self.run_dir / MANIFEST_NAME
        self.run_dir.mkdir(parents=True, exist_ok=True)
        staging = target.with_name(target.name + ".staging")
        staging.write_text(payload, encoding="utf-8")
        os.replace(staging, target)
        self.logger.debug(
            "Run directory finalized",
            run_dir=str(self.run_dir),
            files=len(self.manifest),
        )
        return target


def append_run_record(root: Path, record: RunRecord) -> None:
    """將紀錄附加到 runs.jsonl；僅在父程序呼叫"""
    root.mkdir(parents=True, exist_ok=True)
    line = json.dumps(_jsonable(record.model_dump(mode="json")), sort_keys=True)
    with open(root / RUNS_LOG_NAME, "a", encoding="utf-8") as f:
        f.write(line + "\n")
    logger.debug("Run record appended", name=record.name, status=record.status)


def read_run_records(root: Path) -> List[RunRecord]:
    """
    讀取 runs.jsonl

    Raises:
        HarnessError: 某一行不是合法紀錄
    """
    path = Path(root) / RUNS_LOG_NAME
    if not path.exists():
        return []
    records: List[RunRecord] = []
    with open(path, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(RunRecord.model_validate(json.loads(line)))
            except (json.JSONDecodeError, ValueError) as e:
                raise HarnessError(f"{RUNS_LOG_NAME} line {number} is corrupt: {e}")
    return records


def verify_manifest(run_dir: Path) -> List[str]:
    """
    比對 manifest 與磁碟內容

    Returns:
        List[str]: 問題描述（缺檔、雜湊不符、manifest 遺失）；空列表代表一致
    """
    run_dir = Path(run_dir)
    manifest_path = run_dir / MANIFEST_NAME
    if not manifest_path.exists():
        return [f"{run_dir}: missing {MANIFEST_NAME}"]
    files = json.loads(manifest_path.read_text(encoding="utf-8")).get("files", {})
    problems = []
    for relative, expected in sorted(files.items()):
        path = run_dir / relative
        if not path.exists():
            problems.append(f"{relative}: listed in manifest but missing")
        elif sha256_file(path) != expected:
            problems.append(f"{relative}: sha256 mismatch")
    for path in sorted(run_dir.rglob("*.csv")):
        relative = path.relative_to(run_dir).as_posix()
        if relative not in files:
            problems.append(f"{relative}: not listed in manifest")
    return problems


def require_integrity(run_dir: Path) -> None:
    """
    Raises:
        IntegrityError: manifest 與檔案不符
    """
    problems = verify_manifest(run_dir)
    if problems:
        raise IntegrityError("; ".join(problems))
