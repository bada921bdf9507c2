"""
kelab - 實驗框架

JSON 實驗配置、執行目錄、runs.jsonl 紀錄與驗收套件。
"""

from .acceptance import CRITERIA, AcceptancePlan, run_acceptance
from .config import ExperimentKind, RunConfig, load_run_config, validate_run_config
from .experiments import ExperimentOutcome, execute
from .runner import Report, SweepResult, acceptance, report, run, run_config, sweep
from .store import CheckResult, RunRecord, RunStatus, RunStore, verify_manifest

__all__ = [
    "CRITERIA",
    "AcceptancePlan",
    "run_acceptance",
    "ExperimentKind",
    "RunConfig",
    "load_run_config",
    "validate_run_config",
    "ExperimentOutcome",
    "execute",
    "Report",
    "SweepResult",
    "acceptance",
    "report",
    "run",
    "run_config",
    "sweep",
    "CheckResult",
    "RunRecord",
    "RunStatus",
    "RunStore",
    "verify_manifest",
]
