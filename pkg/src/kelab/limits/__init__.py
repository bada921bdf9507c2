"""
kelab - KLT → LC 極限

t 掃描、單調極限、雙曲尖點驗證與 Schwarz 控制。
"""

from .hyperbolic import (
    DominationReport,
    HyperbolicOracle,
    cusp_cap_mass,
    effective_chordal_sq,
    model_laplacian,
    schwarz_domination_check,
)
from .lc_limit import (
    CuspFit,
    LCLimitResult,
    ProbeTable,
    azd_integrability_probe,
    fit_cusp_profile,
    lc_limit,
)
from .sweeps import (
    TSweep,
    admissibility_threshold,
    default_t_values,
    sweep_divisors,
    sweep_t,
)

__all__ = [
    "DominationReport",
    "HyperbolicOracle",
    "cusp_cap_mass",
    "effective_chordal_sq",
    "model_laplacian",
    "schwarz_domination_check",
    "CuspFit",
    "LCLimitResult",
    "ProbeTable",
    "azd_integrability_probe",
    "fit_cusp_profile",
    "lc_limit",
    "TSweep",
    "admissibility_threshold",
    "default_t_values",
    "sweep_divisors",
    "sweep_t",
]
