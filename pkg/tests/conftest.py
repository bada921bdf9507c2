"""
Pytest 配置和共享 fixtures

提供測試所需的共享配置、對數對與小網格。
"""

import json
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Dict

import pytest

from kelab.core.config import GridSettings, LoggingSettings, Settings
from kelab.discretization.grid import RadialGrid, build_grid, grid_for_pair
from kelab.geometry.model import LogDivisor, LogPair, MarkedSphereModel


@pytest.fixture
def test_settings() -> Settings:
    """測試配置：小網格、單一工作"""
    return Settings(
        environment="testing",
        grid=GridSettings(resolution=32),
        logging=LoggingSettings(level="DEBUG"),
    )


@pytest.fixture
def three_point_model() -> MarkedSphereModel:
    """{0, 1, ∞}"""
    return MarkedSphereModel((0j, 1 + 0j, None))


@pytest.fixture
def klt_pair(three_point_model: MarkedSphereModel) -> LogPair:
    """三點 5/6：deg(K_X + D) = 1/2"""
    return LogPair(
        three_point_model, LogDivisor.uniform(range(3), Fraction(5, 6))
    )


@pytest.fixture
def lc_pair(three_point_model: MarkedSphereModel) -> LogPair:
    """三次穿孔球面：係數全為 1"""
    return LogPair(three_point_model, LogDivisor.uniform(range(3), 1))


@pytest.fixture
def sphere_grid() -> RadialGrid:
    """只標記 0 與 ∞ 的小網格"""
    return build_grid(MarkedSphereModel((0j, None)), 16)


@pytest.fixture
def klt_grid(klt_pair: LogPair) -> RadialGrid:
    return grid_for_pair(klt_pair, 16)


@pytest.fixture
def solve_config_data() -> Dict[str, Any]:
    """最小的 solve 配置"""
    return {
        "schema_version": 1,
        "kind": "solve",
        "name": "solve_three_point",
        "geometry": {
            "points": [[0, 0], [1, 0], "inf"],
            "coefficients": ["5/6", "5/6", "5/6"],
        },
        "solver": {"resolution": 16},
    }


@pytest.fixture
def write_config(tmp_path: Path) -> Callable[[Dict[str, Any], str], Path]:
    """把配置寫成 JSON 檔"""

    def _write(data: Dict[str, Any], name: str = "config.json") -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return path

    return _write
