"""
kelab - 離散化

對數極座標網格、有限體積 Laplacian、求積與極值。
"""

from .grid import ClusterSpec, GridField, RadialGrid, build_grid, grid_for_pair
from .operators import (
    HOLOMORPHIC_MEASURE_FACTOR,
    Extrema,
    area_to_reference,
    disk_integral,
    extrema,
    integrate,
    laplacian,
)

__all__ = [
    "ClusterSpec",
    "GridField",
    "RadialGrid",
    "build_grid",
    "grid_for_pair",
    "HOLOMORPHIC_MEASURE_FACTOR",
    "Extrema",
    "area_to_reference",
    "disk_integral",
    "extrema",
    "integrate",
    "laplacian",
]
