"""
kelab - 求解器

Liouville 型 Monge–Ampère 方程的 Newton 求解、δ 連續化與 Ricci 迭代。
"""

from .ma_solver import (
    AlmostBoundedness,
    CanonicalKEResult,
    LiouvilleProblem,
    PerturbationSchedule,
    RichardsonReport,
    SolveReport,
    almost_boundedness_report,
    auxiliary_weight,
    canonical_problem,
    newton_liouville,
    orbifold_potential,
    require_klt,
    solve_canonical_KE_klt,
    solve_liouville,
)
from .newton import LiouvilleNewton, NewtonResult
from .ricci_iteration import (
    ContractionReport,
    IterationTrace,
    UniquenessReport,
    alpha_sequence,
    area_recursion,
    contraction_report,
    iterate_singular,
    iterate_smooth,
    uniqueness_check,
)

__all__ = [
    "AlmostBoundedness",
    "CanonicalKEResult",
    "LiouvilleProblem",
    "PerturbationSchedule",
    "RichardsonReport",
    "SolveReport",
    "almost_boundedness_report",
    "auxiliary_weight",
    "canonical_problem",
    "newton_liouville",
    "orbifold_potential",
    "require_klt",
    "solve_canonical_KE_klt",
    "solve_liouville",
    "LiouvilleNewton",
    "NewtonResult",
    "ContractionReport",
    "IterationTrace",
    "UniquenessReport",
    "alpha_sequence",
    "area_recursion",
    "contraction_report",
    "iterate_singular",
    "iterate_smooth",
    "uniqueness_check",
]
