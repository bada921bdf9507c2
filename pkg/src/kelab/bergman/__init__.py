"""
kelab - Bergman 動力系統

截面基底、Gram 矩陣、Bergman 核，以及內外兩層的核迭代。
"""

from .dynamics import (
    BergmanSystem,
    BergmanSystemState,
    DriftPack,
    InnerRun,
    NaiveDemoReport,
    OuterRun,
    ScaledLimit,
    VolumeInvariant,
    naive_single_system_demo,
    run_inner,
    run_outer,
    scaled_limit,
    volume_mu,
)
from .kernels import KernelResult, bergman_density, extremal_value
from .sections import (
    BASIS_KINDS,
    GramMatrix,
    SectionBasis,
    check_integrable,
    gram_matrix,
    measure_from_log,
    measure_from_weight,
    multiplier_membership,
)

__all__ = [
    "BergmanSystem",
    "BergmanSystemState",
    "DriftPack",
    "InnerRun",
    "NaiveDemoReport",
    "OuterRun",
    "ScaledLimit",
    "VolumeInvariant",
    "naive_single_system_demo",
    "run_inner",
    "run_outer",
    "scaled_limit",
    "volume_mu",
    "KernelResult",
    "bergman_density",
    "extremal_value",
    "BASIS_KINDS",
    "GramMatrix",
    "SectionBasis",
    "check_integrable",
    "gram_matrix",
    "measure_from_log",
    "measure_from_weight",
    "multiplier_membership",
]
