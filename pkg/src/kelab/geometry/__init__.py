"""
kelab - 幾何核心

標記球面、對數除子、Q 線叢、參考度量。
"""

from .model import (
    LogDivisor,
    LogPair,
    MarkedSphereModel,
    PairClass,
    PairReport,
    PointKind,
    QLineBundle,
    ZariskiData,
    as_fraction,
    chordal_sq,
    classify_pair,
    derived_cluster_exponent,
    zariski_decompose,
)
from .weights import (
    REFERENCE_AREA,
    Density,
    MetricWeight,
    curvature_integral,
    reference_metric,
)

__all__ = [
    "LogDivisor",
    "LogPair",
    "MarkedSphereModel",
    "PairClass",
    "PairReport",
    "PointKind",
    "QLineBundle",
    "ZariskiData",
    "as_fraction",
    "chordal_sq",
    "classify_pair",
    "derived_cluster_exponent",
    "zariski_decompose",
    "REFERENCE_AREA",
    "Density",
    "MetricWeight",
    "curvature_integral",
    "reference_metric",
]
