"""
實驗輸出儲存測試

測試 CSV 格式、manifest 完整性與 runs.jsonl 讀寫。
"""

import json
from fractions import Fraction

import numpy as np
import pytest

from kelab.core.exceptions import HarnessError, IntegrityError
from kelab.harness.store import (
    MANIFEST_NAME,
    CheckResult,
    RunRecord,
    RunStatus,
    RunStore,
    append_run_record,
    format_cell,
    read_run_records,
    require_integrity,
    verify_manifest,
)


def _populate(store: RunStore) -> None:
    store.write_csv(
        "table.csv",
        [{"t": Fraction(9, 10), "value": 0.1, "ok": True}, {"t": 1, "value": None}],
    )
    store.write_json("summary.json", {"area": np.float64(np.pi), "n": np.int64(3)})
    store.write_profiles("profiles/density.csv", [0.0, 1.0], {"u": [1.5, 2.5]})
    store.finalize()


@pytest.mark.unit
class TestFormatCell:
    """測試 CSV 欄位格式"""

    @pytest.mark.parametrize(
        "value,expected",
        [
            (None, ""),
            (True, "true"),
            (np.bool_(False), "false"),
            (np.int64(7), "7"),
            (0.1, "0.1"),
            (np.float64(1e-12), "1e-12"),
            (Fraction(5, 6), "5/6"),
            ("klt", "klt"),
        ],
    )
    def test_format(self, value, expected):
        """浮點數以 repr 輸出"""
        assert format_cell(value) == expected


@pytest.mark.unit
class TestRunStore:
    """測試執行目錄寫入"""

    def test_csv_layout(self, tmp_path):
        """RFC-4180 行尾與欄位順序"""
        store = RunStore(tmp_path / "run")
        path = store.write_csv("table.csv", [{"b": 1, "a": "x,y"}])

        assert path.read_bytes() == b'b,a\r\n1,"x,y"\r\n'

    def test_no_staging_left(self, tmp_path):
        """暫存檔在發布後不存在"""
        store = RunStore(tmp_path / "run")
        _populate(store)

        assert not list((tmp_path / "run").rglob("*.staging"))

    def test_deterministic_bytes(self, tmp_path):
        """相同內容寫出相同位元組"""
        first = RunStore(tmp_path / "first")
        second = RunStore(tmp_path / "second")
        _populate(first)
        _populate(second)

        names = ("table.csv", "summary.json", "profiles/density.csv", MANIFEST_NAME)
        for name in names:
            assert (tmp_path / "first" / name).read_bytes() == (
                tmp_path / "second" / name
            ).read_bytes()

    def test_manifest_lists_files(self, tmp_path):
        """manifest 列出所有寫入的檔案"""
        store = RunStore(tmp_path / "run")
        _populate(store)

        files = json.loads((tmp_path / "run" / MANIFEST_NAME).read_text())["files"]
        assert sorted(files) == ["profiles/density.csv", "summary.json", "table.csv"]

    def test_nonfinite_json(self, tmp_path):
        """非有限浮點數在 JSON 中以字串表示"""
        store = RunStore(tmp_path / "run")
        path = store.write_json("summary.json", {"x": float("inf")})

        assert json.loads(path.read_text()) == {"x": "inf"}


@pytest.mark.unit
class TestVerifyManifest:
    """測試完整性檢查"""

    def test_clean(self, tmp_path):
        """未修改的目錄沒有問題"""
        _populate(RunStore(tmp_path / "run"))

        assert verify_manifest(tmp_path / "run") == []
        require_integrity(tmp_path / "run")

    def test_tampered(self, tmp_path):
        """內容被修改"""
        _populate(RunStore(tmp_path / "run"))
        (tmp_path / "run" / "table.csv").write_text("t\r\n0\r\n")

        problems = verify_manifest(tmp_path / "run")

        assert problems == ["table.csv: sha256 mismatch"]
        with pytest.raises(IntegrityError):
            require_integrity(tmp_path / "run")

    def test_missing_file(self, tmp_path):
        """manifest 中的檔案遺失"""
        _populate(RunStore(tmp_path / "run"))
        (tmp_path / "run" / "summary.json").unlink()

        assert verify_manifest(tmp_path / "run") == [
            "summary.json: listed in manifest but missing"
        ]

    def test_unlisted_csv(self, tmp_path):
        """未列入 manifest 的 CSV"""
        _populate(RunStore(tmp_path / "run"))
        (tmp_path / "run" / "extra.csv").write_text("x\r\n")

        assert verify_manifest(tmp_path / "run") == [
            "extra.csv: not listed in manifest"
        ]

    def test_missing_manifest(self, tmp_path):
        """manifest 不存在"""
        (tmp_path / "run").mkdir()

        problems = verify_manifest(tmp_path / "run")

        assert len(problems) == 1
        assert "missing manifest.json" in problems[0]


@pytest.mark.unit
class TestRunRecords:
    """測試 runs.jsonl"""

    def test_passed(self):
        """NA 檢查不影響通過；失敗檢查或失敗狀態則不通過"""
        record = RunRecord(
            name="r",
            kind="solve",
            config_hash="0" * 64,
            checks=[CheckResult(name="a", passed=True), CheckResult(name="b")],
        )
        assert record.passed

        record.checks.append(CheckResult(name="c", passed=False))
        assert not record.passed

        failed = RunRecord(
            name="r", kind="solve", config_hash="0" * 64, status=RunStatus.FAILED
        )
        assert not failed.passed

    def test_verdict(self):
        """判定字串"""
        assert CheckResult(name="a", passed=True).verdict == "PASS"
        assert CheckResult(name="a", passed=False).verdict == "FAIL"
        assert CheckResult(name="a").verdict == "NA"

    def test_append_and_read(self, tmp_path):
        """附加後可讀回"""
        record = RunRecord(
            name="r",
            kind="bergman",
            config_hash="f" * 64,
            seed=3,
            timings={"total": 1.5},
            checks=[CheckResult(name="a", passed=True, criterion=5, value=0.1)],
        )
        append_run_record(tmp_path, record)
        append_run_record(tmp_path, record)

        records = read_run_records(tmp_path)

        assert len(records) == 2
        assert records[0] == record

    def test_empty_directory(self, tmp_path):
        """沒有 runs.jsonl"""
        assert read_run_records(tmp_path) == []

    def test_corrupt_line(self, tmp_path):
        """損壞的行"""
        (tmp_path / "runs.jsonl").write_text('{"name": "r"}\n', encoding="utf-8")

        with pytest.raises(HarnessError, match="line 1"):
            read_run_records(tmp_path)
