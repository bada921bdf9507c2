"""
實驗配置模型

JSON 實驗配置的 pydantic 結構、驗證與雜湊。未知鍵一律拒絕。
"""

import hashlib
import json
from enum import Enum
from fractions import Fraction
from itertools import product
from pathlib import Path, PurePosixPath
from typing import Any, Dict, Iterator, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from ..core.exceptions import ConfigValidationError, InvalidDivisorError
from ..geometry.model import LogDivisor, LogPair, MarkedSphereModel

SCHEMA_VERSION = 1

# 掃描允許的參數軸
SWEEP_AXES = ("a", "t", "resolution", "ell_max")

PointEntry = Union[str, float, List[float]]


class ExperimentKind(str, Enum):
    """實驗種類"""

    SOLVE = "solve"
    ITERATE = "iterate"
    BERGMAN = "bergman"
    SWEEP_T = "sweep-t"
    LC_LIMIT = "lc-limit"
    FAMILY = "family"
    FULL_ACCEPTANCE = "full-acceptance"


def _parse_rational(value: str) -> Fraction:
    try:
        return Fraction(value.strip())
    except (ValueError, ZeroDivisionError) as e:
        raise ValueError(f"'{value}' is not a rational number") from e


class GeometryBlock(BaseModel):
    """標記點與除子係數"""

    model_config = ConfigDict(extra="forbid")

    points: List[PointEntry] = Field(
        description='標記點：[re, im]、數字或 "inf"', min_length=1
    )
    coefficients: List[str] = Field(
        description="與 points 對齊的有理係數字串，'0' 表示不在除子中"
    )
    auxiliary: Optional[List[str]] = Field(
        default=None, description="與 points 對齊的輔助除子 E 係數"
    )

    @field_validator("points")
    @classmethod
    def validate_points(cls, v: List[PointEntry]) -> List[PointEntry]:
        for entry in v:
            if isinstance(entry, list) and len(entry) != 2:
                raise ValueError(f"Point {entry} must be [re, im]")
        return v

    @field_validator("coefficients", "auxiliary")
    @classmethod
    def validate_rationals(cls, v: Optional[List[str]]) -> Optional[List[str]]:
        if v is not None:
            for entry in v:
                _parse_rational(entry)
        return v

    def model(self) -> MarkedSphereModel:
        return MarkedSphereModel.from_config(self.points)

    def pair(self) -> LogPair:
        """
        建立對數對

        Raises:
            ConfigValidationError: 係數列表長度與標記點不符
            InvalidDivisorError: 標記點重複
        """
        if len(self.coefficients) != len(self.points):
            raise ConfigValidationError(
                "geometry.coefficients: expected one coefficient per marked point "
                f"({len(self.points)}), got {len(self.coefficients)}",
                key="geometry.coefficients",
            )
        auxiliary = self.auxiliary or ["0"] * len(self.points)
        if len(auxiliary) != len(self.points):
            raise ConfigValidationError(
                "geometry.auxiliary: expected one coefficient per marked point",
                key="geometry.auxiliary",
            )
        divisor = LogDivisor(
            tuple((i, _parse_rational(c)) for i, c in enumerate(self.coefficients))
        )
        E = LogDivisor(tuple((i, _parse_rational(c)) for i, c in enumerate(auxiliary)))
        return LogPair(self.model(), divisor, E)


class SolverBlock(BaseModel):
    """數值參數"""

    model_config = ConfigDict(extra="forbid")

    resolution: int = Field(default=128, ge=8, description="徑向環數")
    tol: Optional[float] = Field(default=None, gt=0, description="殘差容許值")
    schedule: Literal["direct", "geometric"] = Field(
        default="direct", description="δ 排程"
    )
    delta_values: Optional[List[float]] = Field(
        default=None, description="明確的 δ 排程（覆蓋 schedule）"
    )
    a: Optional[int] = Field(default=None, ge=1, description="迭代參數")
    ell_max: int = Field(default=32, ge=4, description="內層 Bergman 步數")
    m_max: Optional[int] = Field(
        default=None, ge=1, description="Ricci 迭代步數或 Bergman 外層輪數上限"
    )
    t_values: Optional[List[str]] = Field(default=None, description="t 掃描的有理值")
    estimator: Literal["ratio", "root"] = Field(default="ratio")
    twist_degree: Optional[int] = Field(default=None, ge=0)
    drift_degree: Optional[int] = Field(
        default=None, description="光滑漂移 (L, h_FS^deg) 的次數；僅 iterate 使用"
    )
    perturbation: float = Field(
        default=0.0, description="起始形式勢的擾動幅度 ε·|z|²/(1+|z|²)"
    )

    @field_validator("t_values")
    @classmethod
    def validate_t_values(cls, v: Optional[List[str]]) -> Optional[List[str]]:
        if v is not None:
            for entry in v:
                t = _parse_rational(entry)
                if not 0 < t <= 1:
                    raise ValueError(f"t = {entry} must lie in (0, 1]")
        return v

    @property
    def t_fractions(self) -> Optional[List[Fraction]]:
        if self.t_values is None:
            return None
        return [_parse_rational(t) for t in self.t_values]


class FamilyBlock(BaseModel):
    """四點族參數"""

    model_config = ConfigDict(extra="forbid")

    coefficient: str = Field(default="5/6")
    moving: bool = Field(default=True)
    base_nodes: Optional[int] = Field(default=None, ge=3)
    base_radius: Optional[float] = Field(default=None, gt=0)
    bergman: bool = Field(default=False, description="改用纖維 Bergman 核檢驗")
    drift_sign: Literal[1, -1] = Field(default=1)
    gamma: float = Field(default=1.0, gt=0)
    tolerance: float = Field(default=1e-4, gt=0)

    @field_validator("coefficient")
    @classmethod
    def validate_coefficient(cls, v: str) -> str:
        _parse_rational(v)
        return v


class SweepBlock(BaseModel):
    """笛卡兒參數網格"""

    model_config = ConfigDict(extra="forbid")

    grid: Dict[str, List[Any]] = Field(default_factory=dict)

    @field_validator("grid")
    @classmethod
    def validate_axes(cls, v: Dict[str, List[Any]]) -> Dict[str, List[Any]]:
        for key in v:
            if key not in SWEEP_AXES:
                raise ValueError(
                    f"Unknown sweep axis '{key}', expected one of {list(SWEEP_AXES)}"
                )
        return v

    @property
    def empty(self) -> bool:
        return not self.grid or any(len(values) == 0 for values in self.grid.values())

    def cells(self) -> Iterator[Dict[str, Any]]:
        """依鍵排序的笛卡兒積"""
        if self.empty:
            return
        keys = sorted(self.grid)
        for values in product(*(self.grid[k] for k in keys)):
            yield dict(zip(keys, values))


class HarnessBlock(BaseModel):
    """輸出位置與亂數種子"""

    model_config = ConfigDict(extra="forbid")

    output: str = Field(default="", description="相對於輸出目錄的子目錄")
    seed: Optional[int] = Field(default=None)
    quick: bool = Field(default=False, description="縮小的驗收配置")

    @field_validator("output")
    @classmethod
    def validate_output(cls, v: str) -> str:
        path = PurePosixPath(v)
        if path.is_absolute() or ".." in path.parts:
            raise ValueError(f"Output path '{v}' must stay inside the output directory")
        return v


class RunConfig(BaseModel):
    """單一實驗的完整配置"""

    model_config = ConfigDict(extra="forbid", use_enum_values=True)

    schema_version: Literal[1] = Field(default=SCHEMA_VERSION)
    kind: ExperimentKind
    name: str = Field(default="run", pattern=r"^[A-Za-z0-9_.-]+$")
    geometry: Optional[GeometryBlock] = None
    solver: SolverBlock = Field(default_factory=SolverBlock)
    family: Optional[FamilyBlock] = None
    sweep: Optional[SweepBlock] = None
    harness: HarnessBlock = Field(default_factory=HarnessBlock)

    def require_geometry(self) -> GeometryBlock:
        if self.geometry is None:
            raise ConfigValidationError(
                f"geometry: required for experiment kind '{self.kind}'",
                key="geometry",
            )
        return self.geometry

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def with_cell(self, cell: Dict[str, Any]) -> "RunConfig":
        """以掃描格點覆寫求解參數"""
        solver = self.solver.model_dump()
        for key, value in cell.items():
            if key == "t":
                solver["t_values"] = [str(value)]
            else:
                solver[key] = value
        label = "_".join(f"{k}-{cell[k]}" for k in sorted(cell)).replace("/", "_")
        return validate_run_config(
            {
                **self.model_dump(mode="json", exclude={"sweep"}),
                "name": f"{self.name}_{label}" if label else self.name,
                "solver": solver,
            }
        )


def _format_error(error: ValidationError) -> ConfigValidationError:
    first = error.errors()[0]
    key = ".".join(str(part) for part in first["loc"]) or "<root>"
    if first["type"] == "extra_forbidden":
        reason = "unknown key"
    else:
        reason = first["msg"]
    return ConfigValidationError(f"{key}: {reason}", key=key)


def validate_run_config(data: Any) -> RunConfig:
    """
    驗證配置映射

    Raises:
        ConfigValidationError: 訊息帶有鍵路徑與原因
    """
    if not isinstance(data, dict):
        raise ConfigValidationError("Run config must be a JSON object", key="<root>")
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        raise _format_error(e) from e
    if config.geometry is not None:
        try:
            config.geometry.pair()
        except InvalidDivisorError as e:
            raise ConfigValidationError(f"geometry: {e}", key="geometry") from e
    return config


def load_run_config(path: Union[str, Path]) -> RunConfig:
    """
    讀取 JSON 實驗配置

    Args:
        path: 配置檔路徑

    Returns:
        RunConfig: 已驗證的配置

    Raises:
        FileNotFoundError: 檔案不存在
        ConfigValidationError: JSON 無法解析或驗證失敗
    """
    config_file = Path(path)
    if not config_file.exists():
        raise FileNotFoundError(f"Run config not found: {path}")
    try:
        with open(config_file, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigValidationError(
            f"<root>: invalid JSON ({e.msg} at line {e.lineno})", key="<root>"
        ) from e
    return validate_run_config(data)
