"""
配置管理模組

統一管理數值實驗的配置，支持環境變數和配置文件。
"""

import json
import os
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml
from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .logging import get_logger

logger = get_logger(__name__)


class GridSettings(BaseSettings):
    """網格配置"""

    model_config = SettingsConfigDict(env_prefix="KELAB_GRID_", case_sensitive=False)

    resolution: int = Field(default=128)
    angular_resolution: Optional[int] = Field(default=None)
    extent: float = Field(default=12.0)
    stretch: float = Field(default=2.0)
    cluster_rings: int = Field(default=8)
    cluster_width: float = Field(default=0.25)
    max_cluster_exponent: int = Field(default=8)
    spacing_floor: float = Field(default=1e-12)
    cap_mass_tolerance: float = Field(default=1e-4)


class SolverSettings(BaseSettings):
    """Newton 求解器配置"""

    model_config = SettingsConfigDict(env_prefix="KELAB_SOLVER_", case_sensitive=False)

    tolerance: float = Field(default=1e-10)
    max_iterations: int = Field(default=60)
    armijo: float = Field(default=1e-4)
    max_step: float = Field(default=20.0)
    delta_start: float = Field(default=0.5)
    delta_min: float = Field(default=1e-4)
    epsilon: float = Field(default=1e-2)


class IterationSettings(BaseSettings):
    """Ricci 迭代配置"""

    model_config = SettingsConfigDict(
        env_prefix="KELAB_ITERATION_", case_sensitive=False
    )

    m_max: int = Field(default=200)
    tolerance: float = Field(default=1e-8)
    ratio_slack: float = Field(default=0.02)


class BergmanSettings(BaseSettings):
    """Bergman 動力系統配置"""

    model_config = SettingsConfigDict(env_prefix="KELAB_BERGMAN_", case_sensitive=False)

    ell_max: int = Field(default=32)
    twist_degree: int = Field(default=2)
    condition_threshold: float = Field(default=1e12)
    high_precision_dps: int = Field(default=40)
    estimator: str = Field(default="ratio")
    basis: str = Field(default="coherent")
    fit_min_ell: int = Field(default=8)
    fit_tolerance: float = Field(default=5e-2)


class LimitSettings(BaseSettings):
    """KLT → LC 極限配置"""

    model_config = SettingsConfigDict(env_prefix="KELAB_LIMITS_", case_sensitive=False)

    k_min: int = Field(default=2)
    k_max: int = Field(default=10)
    monotonicity_tolerance: float = Field(default=1e-8)
    cusp_log_offset: float = Field(default=2.718281828459045)
    excision_radius: float = Field(default=0.05)


class FamilySettings(BaseSettings):
    """族變分配置"""

    model_config = SettingsConfigDict(env_prefix="KELAB_FAMILY_", case_sensitive=False)

    base_radius: float = Field(default=0.3)
    base_nodes: int = Field(default=11)
    anchor: float = Field(default=-1.0)
    track_exclusion: float = Field(default=0.05)


class HarnessSettings(BaseSettings):
    """實驗框架配置"""

    model_config = SettingsConfigDict(
        env_prefix="KELAB_HARNESS_", case_sensitive=False
    )

    output_dir: str = Field(default="runs")
    workers: int = Field(default=1)
    seed: int = Field(default=0)


class LoggingSettings(BaseSettings):
    """日誌配置"""

    model_config = SettingsConfigDict(env_prefix="KELAB_LOG_", case_sensitive=False)

    level: str = Field(default="INFO")
    format: str = Field(default="json")

    # 處理器配置
    handlers: List[Dict[str, Any]] = Field(
        default_factory=lambda: [
            {"type": "console", "level": "INFO"},
        ]
    )


class Settings(BaseSettings):
    """主配置類"""

    # 環境配置
    environment: str = Field(default="development")

    # 子配置
    grid: GridSettings = Field(default_factory=GridSettings)
    solver: SolverSettings = Field(default_factory=SolverSettings)
    iteration: IterationSettings = Field(default_factory=IterationSettings)
    bergman: BergmanSettings = Field(default_factory=BergmanSettings)
    limits: LimitSettings = Field(default_factory=LimitSettings)
    family: FamilySettings = Field(default_factory=FamilySettings)
    harness: HarnessSettings = Field(default_factory=HarnessSettings)
    logging: LoggingSettings = Field(default_factory=LoggingSettings)

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
        env_nested_delimiter="__",
    )

    @field_validator("environment")
    @classmethod
    def validate_environment(cls, v: str) -> str:
        """驗證環境配置"""
        valid_envs = ["development", "testing", "staging", "production"]
        if v not in valid_envs:
            raise ValueError(f"Environment must be one of: {valid_envs}")
        return v

    @property
    def config_file_path(self) -> Path:
        """此環境的 YAML 覆蓋檔"""
        return Path(f"configs/{self.environment}.yaml")


def load_yaml_config_if_exists() -> Dict[str, Any]:
    """
    從 YAML 配置文件加載配置（如果存在）

    找不到或讀取失敗時回傳空字典，讓預設值與環境變數生效。
    """
    environment = os.getenv("ENVIRONMENT", "development")
    config_file = Path(f"configs/{environment}.yaml")

    if not config_file.exists():
        logger.debug("Config file not found, using defaults", path=str(config_file))
        return {}

    try:
        with open(config_file, "r", encoding="utf-8") as f:
            config_data = yaml.safe_load(f) or {}

        logger.debug("Config file loaded", path=str(config_file))
        return dict(config_data)

    except (OSError, yaml.YAMLError) as e:
        logger.warning(
            "Failed to load config file", path=str(config_file), error=str(e)
        )
        return {}


@lru_cache()
def get_settings() -> Settings:
    """
    獲取配置實例

    以 lru_cache 快取；configs/<environment>.yaml 存在時覆蓋預設值
    """
    return settings_from_mapping(load_yaml_config_if_exists())


def settings_from_mapping(data: Dict[str, Any]) -> Settings:
    """
    由 YAML/JSON 映射建立配置

    Args:
        data: 以子配置名稱為鍵的字典，例如 {"grid": {"resolution": 64}}

    Returns:
        Settings: 配置實例
    """
    sections = {
        "grid": GridSettings,
        "solver": SolverSettings,
        "iteration": IterationSettings,
        "bergman": BergmanSettings,
        "limits": LimitSettings,
        "family": FamilySettings,
        "harness": HarnessSettings,
        "logging": LoggingSettings,
    }
    kwargs: Dict[str, Any] = {}
    for key, value in (data or {}).items():
        if key in sections and isinstance(value, dict):
            kwargs[key] = sections[key](**value)
        elif key == "environment":
            kwargs[key] = value
    return Settings(**kwargs)


def load_config_from_file(config_path: str) -> Dict[str, Any]:
    """
    從指定文件加載配置

    Args:
        config_path: 配置文件路徑

    Returns:
        Dict[str, Any]: 配置字典

    Raises:
        FileNotFoundError: 文件不存在
        ValueError: 不支援的文件格式
    """
    config_file = Path(config_path)
    if not config_file.exists():
        raise FileNotFoundError(f"Config file not found: {config_path}")

    with open(config_file, "r", encoding="utf-8") as f:
        if config_file.suffix.lower() in [".yaml", ".yml"]:
            return dict(yaml.safe_load(f) or {})
        elif config_file.suffix.lower() == ".json":
            return dict(json.load(f))
        else:
            raise ValueError(f"Unsupported config file format: {config_file.suffix}")


def validate_config(settings: Settings) -> List[str]:
    """
    驗證配置的完整性和合理性

    Args:
        settings: 配置實例

    Returns:
        List[str]: 驗證錯誤列表，空列表表示驗證通過
    """
    errors = []

    # 網格
    if settings.grid.resolution < 8:
        errors.append("Grid resolution must be at least 8")
    if settings.grid.resolution % 2 != 0:
        errors.append("Grid resolution must be even")
    if settings.grid.extent <= 0:
        errors.append("Grid extent must be positive")
    if settings.grid.cluster_rings < 8:
        errors.append("Cluster rings must be at least 8")

    # 求解器
    if settings.solver.tolerance <= 0:
        errors.append("Solver tolerance must be positive")
    if not 0 < settings.solver.delta_min < settings.solver.delta_start:
        errors.append("Delta schedule must satisfy 0 < delta_min < delta_start")
    if settings.solver.epsilon <= 0:
        errors.append("Epsilon must be positive")

    # 迭代
    if settings.iteration.m_max < 1:
        errors.append("Iteration m_max must be at least 1")

    # Bergman
    if settings.bergman.estimator not in ("ratio", "root"):
        errors.append("Bergman estimator must be one of: ['ratio', 'root']")
    if settings.bergman.basis not in ("monomial", "coherent"):
        errors.append("Bergman basis must be one of: ['monomial', 'coherent']")
    if settings.bergman.twist_degree < 0:
        errors.append("Twist degree must be nonnegative")

    # 實驗框架
    if settings.harness.workers < 1:
        errors.append("Harness workers must be at least 1")

    # 日誌
    valid_log_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
    if settings.logging.level.upper() not in valid_log_levels:
        errors.append(f"Log level must be one of: {valid_log_levels}")

    return errors
