"""
族變分模組

底圓盤上的纖維典範密度與多重次調和性檢驗。
"""

from .variation import (
    FamilySpec,
    FiberSolution,
    FiberWeightPack,
    PSHReport,
    RelativeDensityField,
    family_grid,
    fiber_bergman_psh_test,
    psh_test,
    restriction_defect,
    solve_family,
    solve_fiber,
)

__all__ = [
    "FamilySpec",
    "FiberSolution",
    "FiberWeightPack",
    "PSHReport",
    "RelativeDensityField",
    "family_grid",
    "fiber_bergman_psh_test",
    "psh_test",
    "restriction_defect",
    "solve_family",
    "solve_fiber",
]
