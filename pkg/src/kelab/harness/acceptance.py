"""
驗收套件

判準 1–14 的內建配置。每個判準是獨立的函數，以 joblib 並行執行；
任何模組錯誤都轉成該判準的 FAIL，而不是中止整個套件。
"""

import tempfile
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from ..bergman.dynamics import BergmanSystem, OuterRun, run_outer
from ..bergman.kernels import bergman_density, extremal_value
from ..bergman.sections import SectionBasis, gram_matrix
from ..core.config import Settings
from ..core.exceptions import KelabError
from ..core.logging import get_logger
from ..discretization.grid import TWO_PI, RadialGrid, build_grid, grid_for_pair
from ..family.variation import (
    FamilySpec,
    FiberWeightPack,
    family_grid,
    fiber_bergman_psh_test,
    psh_test,
    solve_family,
)
from ..geometry.model import LogDivisor, LogPair, MarkedSphereModel, QLineBundle
from ..geometry.weights import MetricWeight
from ..limits.hyperbolic import HyperbolicOracle, schwarz_domination_check
from ..limits.lc_limit import lc_limit
from ..limits.sweeps import TSweep, sweep_t
from ..solvers.ma_solver import (
    PerturbationSchedule,
    auxiliary_weight,
    solve_canonical_KE_klt,
)
from ..solvers.ricci_iteration import (
    IterationTrace,
    contraction_report,
    iterate_singular,
    iterate_smooth,
    uniqueness_check,
)
from .config import ExperimentKind, RunConfig, validate_run_config
from .experiments import (
    AREA_TOLERANCE,
    CROSS_ORACLE_TOLERANCE,
    MIN_CONTRACTION_STEPS,
    MONOTONICITY_TOLERANCE,
    SCALED_OVERSHOOT,
    ExperimentOutcome,
    area_check,
    execute,
    oracle_checks,
    radial_profile,
    regular_mask,
    scaled_overshoot,
    smooth_bump,
)
from .store import RunStore

logger = get_logger(__name__)

CRITERIA = tuple(range(1, 15))

CRITERION_TITLES: Dict[int, str] = {
    1: "FS fixed point",
    2: "Gauss-Bonnet area",
    3: "Ricci contraction",
    4: "delta monotonicity",
    5: "Bergman constancy",
    6: "Holder chain",
    7: "cross-oracle equivalence",
    8: "twist independence",
    9: "uniqueness",
    10: "t monotonicity",
    11: "LC limit vs hyperbolic",
    12: "Schwarz domination",
    13: "family psh",
    14: "determinism",
}

FS_FIXED_POINT_TOLERANCE = 1e-6
FS_FIXED_POINT_SECONDS = 5.0
KERNEL_VARIATION_TOLERANCE = 1e-8
TWIST_TOLERANCE = 1e-2
UNIQUENESS_TOLERANCE = 1e-5
FAMILY_KLT_TOLERANCE = 1e-4
FAMILY_LC_TOLERANCE = 1e-3
FAMILY_SECONDS = 30 * 60.0

THREE_POINTS: Tuple[Optional[complex], ...] = (0j, 1 + 0j, None)
FOUR_POINTS: Tuple[Optional[complex], ...] = (0j, 1 + 0j, None, -1 + 0j)
FIVE_POINTS: Tuple[Optional[complex], ...] = (0j, 1 + 0j, None, -1 + 0j, 2 + 0j)


@dataclass(frozen=True)
class AcceptancePlan:
    """驗收規模；quick 版本縮小網格與排程，判準門檻不變"""

    quick: bool
    resolution: int
    fixed_point_resolution: int
    ell_max: int
    iteration_steps: int
    iteration_tol: float
    t_values: Tuple[Fraction, ...]
    family_resolution: int
    family_nodes: int
    delta_values: Tuple[float, ...] = (0.4, 0.2, 0.1, 0.05)
    kernel_degrees: Tuple[int, ...] = (2, 4, 8)
    contraction_a: Tuple[int, ...] = (2, 3, 5)
    twist_degrees: Tuple[int, int] = (2, 4)

    @classmethod
    def build(cls, quick: bool = False) -> "AcceptancePlan":
        if quick:
            return cls(
                quick=True,
                resolution=48,
                fixed_point_resolution=256,
                ell_max=16,
                iteration_steps=30,
                iteration_tol=1e-11,
                t_values=(Fraction(4, 5), Fraction(9, 10), Fraction(99, 100)),
                family_resolution=32,
                family_nodes=5,
            )
        return cls(
            quick=False,
            resolution=128,
            fixed_point_resolution=256,
            ell_max=32,
            iteration_steps=60,
            iteration_tol=1e-12,
            t_values=tuple(
                Fraction(n, 100) for n in (80, 85, 90, 93, 95, 97, 98, 99)
            ),
            family_resolution=128,
            family_nodes=11,
        )


def uniform_pair(
    points: Sequence[Optional[complex]],
    coefficient: Fraction,
    count: Optional[int] = None,
    auxiliary: Optional[Dict[int, Fraction]] = None,
) -> LogPair:
    """前 count 個標記點帶相同係數的對數對"""
    count = len(points) if count is None else count
    E = LogDivisor.from_mapping(dict(auxiliary or {}))
    return LogPair(
        MarkedSphereModel(tuple(points)),
        LogDivisor.uniform(range(count), coefficient),
        E,
    )


# ----------------------------------------------------------------------
# 判準
# ----------------------------------------------------------------------


def fs_fixed_point(
    plan: AcceptancePlan, settings: Settings, seed: int
) -> ExperimentOutcome:
    """1. 漂移曲率 3·ω_FS 的扭轉 KE 方程以參考度量為解"""
    outcome = ExperimentOutcome()
    grid = build_grid(
        MarkedSphereModel((0j, None)),
        plan.fixed_point_resolution,
        settings=settings.grid,
    )
    drift = MetricWeight(None, {}, QLineBundle(3))
    omega0 = MetricWeight(None, {}, QLineBundle(1))
    start = time.perf_counter()
    trace = iterate_smooth(
        grid, drift, omega0, 1, 1, solver_settings=settings.solver
    )
    elapsed = time.perf_counter() - start
    outcome.timings["solve"] = elapsed

    u = trace.potentials[-1].values
    sup_norm = float(np.max(np.abs(u)))
    outcome.check(
        "fs_potential_sup_norm",
        sup_norm < FS_FIXED_POINT_TOLERANCE and not trace.failed,
        criterion=1,
        value=sup_norm,
        threshold=FS_FIXED_POINT_TOLERANCE,
    )
    residual = trace.fixed_point_residual
    outcome.check(
        "fs_closed_form_residual",
        residual is not None and residual < FS_FIXED_POINT_TOLERANCE,
        criterion=1,
        value=residual,
        threshold=FS_FIXED_POINT_TOLERANCE,
    )
    outcome.check(
        "fs_runtime",
        elapsed < FS_FIXED_POINT_SECONDS,
        criterion=1,
        threshold=FS_FIXED_POINT_SECONDS,
    )
    outcome.summaries = {"rings": grid.n_s, "trace": trace.to_dict()}
    return outcome


def gauss_bonnet(
    plan: AcceptancePlan, settings: Settings, seed: int
) -> ExperimentOutcome:
    """2. 典範解面積 = 2π·deg(K_X + D)，deg ∈ {1/2, 1, 4/3}"""
    outcome = ExperimentOutcome()
    pairs = [
        uniform_pair(THREE_POINTS, Fraction(5, 6)),
        uniform_pair(FOUR_POINTS, Fraction(3, 4)),
        uniform_pair(FOUR_POINTS, Fraction(5, 6)),
    ]
    rows = []
    for pair in pairs:
        grid = grid_for_pair(pair, plan.resolution, settings.grid)
        result = solve_canonical_KE_klt(
            pair, PerturbationSchedule.direct(), grid, settings=settings.solver
        )
        expected = float(TWO_PI * pair.degree)
        check = area_check(
            outcome,
            f"area_deg_{pair.degree}",
            result.final.area,
            expected,
            criterion=2,
        )
        outcome.check(
            f"converged_deg_{pair.degree}", result.final.converged, criterion=2
        )
        rows.append(
            {
                "degree": str(pair.degree),
                "area": result.final.area,
                "expected_area": expected,
                "relative_defect": check.value,
                "residual": result.final.residual_norm,
                "iterations": result.final.newton_iterations,
            }
        )
    outcome.tables["gauss_bonnet.csv"] = rows
    return outcome


def _contraction_pair(a: int) -> LogPair:
    """a 消去分母的 KLT 對：a = 2 → 5×½，a = 3 → 4×⅔，其他 → 3×(a−1)/a"""
    if a == 2:
        return uniform_pair(FIVE_POINTS, Fraction(1, 2))
    if a == 3:
        return uniform_pair(FOUR_POINTS, Fraction(2, 3))
    return uniform_pair(THREE_POINTS, Fraction(a - 1, a))


def contraction(
    plan: AcceptancePlan, settings: Settings, seed: int
) -> ExperimentOutcome:
    """3. 收縮比 ≤ (a−1)/a + 0.02，光滑與奇異漂移，各至少 10 步"""
    outcome = ExperimentOutcome()
    slack = settings.iteration.ratio_slack
    base = build_grid(
        MarkedSphereModel((0j, None)), plan.resolution, settings=settings.grid
    )
    for a in plan.contraction_a:
        drift = MetricWeight(None, {}, QLineBundle(3))
        omega0 = MetricWeight(0.5 * smooth_bump(base), {}, QLineBundle(a))
        smooth = iterate_smooth(
            base,
            drift,
            omega0,
            a,
            plan.iteration_steps,
            plan.iteration_tol,
            solver_settings=settings.solver,
            settings=settings.iteration,
        )
        pair = _contraction_pair(a)
        singular = iterate_singular(
            pair,
            None,
            a,
            None,
            plan.iteration_steps,
            plan.iteration_tol,
            grid=grid_for_pair(pair, plan.resolution, settings.grid),
            solver_settings=settings.solver,
            settings=settings.iteration,
        )
        for label, trace in (("smooth", smooth), ("singular", singular)):
            report = contraction_report(trace, slack)
            outcome.check(
                f"contraction_{label}_a{a}",
                report.passed and not trace.failed,
                criterion=3,
                value=report.fitted_ratio,
                threshold=report.bound + slack,
            )
            outcome.check(
                f"iterations_{label}_a{a}",
                trace.steps >= MIN_CONTRACTION_STEPS,
                criterion=3,
                value=trace.steps,
                threshold=MIN_CONTRACTION_STEPS,
            )
            outcome.tables[f"contraction_{label}_a{a}.csv"] = report.rows
    return outcome


def delta_monotonicity(
    plan: AcceptancePlan, settings: Settings, seed: int
) -> ExperimentOutcome:
    """4. 擾動密度沿 δ 逐節點非遞增（E 非空）"""
    outcome = ExperimentOutcome()
    pair = uniform_pair(
        FOUR_POINTS, Fraction(5, 6), count=3, auxiliary={3: Fraction(1, 4)}
    )
    grid = grid_for_pair(pair, plan.resolution, settings.grid)
    schedule = PerturbationSchedule(
        plan.delta_values, settings.solver.epsilon, auxiliary_weight(pair)
    )
    result = solve_canonical_KE_klt(
        pair, schedule, grid, settings=settings.solver
    )
    deltas = list(plan.delta_values)
    margins = [
        result.monotonicity_margin(larger, smaller)
        for larger, smaller in zip(deltas, deltas[1:])
    ]
    margins.append(
        float(np.min(result.final.log_density - result.trace[-1].log_density))
    )
    worst = min(margins)
    outcome.check(
        "delta_monotonicity",
        worst >= -MONOTONICITY_TOLERANCE,
        criterion=4,
        value=worst,
        threshold=-MONOTONICITY_TOLERANCE,
    )
    outcome.tables["delta_trace.csv"] = result.rows()
    outcome.profiles["delta_profiles.csv"] = (
        grid.s,
        {
            f"delta={report.delta!r}": radial_profile(grid, report.log_density)
            for report in [*result.trace, result.final]
        },
    )
    return outcome


def bergman_constancy(
    plan: AcceptancePlan, settings: Settings, seed: int
) -> ExperimentOutcome:
    """5. K(ℙ¹, O(d), h_FS^d) 為常數 (d+1)/2π"""
    outcome = ExperimentOutcome()
    rng = np.random.default_rng(seed)
    grid = build_grid(
        MarkedSphereModel((0j, None)), plan.resolution, settings=settings.grid
    )
    rows = []
    for d in plan.kernel_degrees:
        basis = SectionBasis(d, kind="monomial")
        gram = gram_matrix(basis, MetricWeight(None, {}, QLineBundle(d)), grid)
        kernel = bergman_density(basis, gram, grid, settings=settings.bergman)
        values = np.exp(kernel.log_kernel)
        expected = (d + 1) / TWO_PI
        variation = float((np.max(values) - np.min(values)) / np.mean(values))
        offset = float(np.max(np.abs(values / expected - 1.0)))
        nodes = rng.choice(grid.size, size=8, replace=False)
        extremal = extremal_value(basis, gram, grid, nodes)
        extremal_gap = float(np.max(np.abs(extremal - kernel.log_kernel[nodes])))
        outcome.check(
            f"kernel_variation_d{d}",
            variation < KERNEL_VARIATION_TOLERANCE,
            criterion=5,
            value=variation,
            threshold=KERNEL_VARIATION_TOLERANCE,
        )
        outcome.check(
            f"kernel_trace_value_d{d}",
            offset < KERNEL_VARIATION_TOLERANCE,
            criterion=5,
            value=offset,
            threshold=KERNEL_VARIATION_TOLERANCE,
        )
        outcome.check(
            f"kernel_extremal_d{d}",
            extremal_gap < KERNEL_VARIATION_TOLERANCE,
            criterion=5,
            value=extremal_gap,
            threshold=KERNEL_VARIATION_TOLERANCE,
        )
        rows.append(
            {
                "degree": d,
                "variation": variation,
                "trace_offset": offset,
                "extremal_gap": extremal_gap,
                "condition": kernel.condition,
            }
        )
    outcome.tables["bergman_constancy.csv"] = rows
    return outcome


def _outer(
    pair: LogPair,
    grid: RadialGrid,
    ell_max: int,
    settings: Settings,
    *,
    twist_degree: Optional[int] = None,
    trace: Optional[IterationTrace] = None,
) -> OuterRun:
    twist = (
        None
        if twist_degree is None
        else MetricWeight(None, {}, QLineBundle(twist_degree))
    )
    system = BergmanSystem.singular(
        pair, None, None, grid=grid, twist=twist, settings=settings.bergman
    )
    return run_outer(
        system,
        ell_max=ell_max,
        m_max=1,
        trace=trace,
        mask=regular_mask(pair, grid, settings.limits.excision_radius),
        settings=settings.bergman,
    )


def holder_chain(
    plan: AcceptancePlan, settings: Settings, seed: int
) -> ExperimentOutcome:
    """6. Hölder 鏈與縮放積分上界，兩個 KLT 配置"""
    outcome = ExperimentOutcome()
    for pair in (
        uniform_pair(THREE_POINTS, Fraction(5, 6)),
        uniform_pair(FOUR_POINTS, Fraction(3, 4)),
    ):
        grid = grid_for_pair(pair, plan.resolution, settings.grid)
        outer = _outer(pair, grid, plan.ell_max, settings)
        label = f"deg_{pair.degree}"
        outcome.check(
            f"holder_chain_{label}",
            outer.inner_runs[-1].holder_ok,
            criterion=6,
        )
        overshoot = scaled_overshoot(outer, settings.bergman.fit_min_ell)
        outcome.check(
            f"scaled_overshoot_{label}",
            overshoot <= SCALED_OVERSHOOT,
            criterion=6,
            value=overshoot,
            threshold=SCALED_OVERSHOOT,
        )
        outcome.tables[f"holder_{label}.csv"] = outer.rows()
    return outcome


def cross_oracle(
    plan: AcceptancePlan, settings: Settings, seed: int
) -> ExperimentOutcome:
    """7. Bergman 縮放極限、Ricci 迭代第一步與直接求解三者一致"""
    outcome = ExperimentOutcome()
    pair = uniform_pair(THREE_POINTS, Fraction(5, 6))
    grid = grid_for_pair(pair, plan.resolution, settings.grid)
    mask = regular_mask(pair, grid, settings.limits.excision_radius)
    trace = iterate_singular(
        pair,
        None,
        None,
        None,
        plan.iteration_steps,
        plan.iteration_tol,
        grid=grid,
        solver_settings=settings.solver,
        settings=settings.iteration,
    )
    gaps: List[float] = []
    rows = []
    for ell_max in (plan.ell_max // 2, plan.ell_max):
        outer = _outer(pair, grid, ell_max, settings, trace=trace)
        gap = outer.ricci_gaps[0]
        gaps.append(gap)
        rows.append({"ell_max": ell_max, "bergman_vs_ricci_step1": gap})
    outcome.check(
        "bergman_vs_ricci_step1",
        gaps[-1] < CROSS_ORACLE_TOLERANCE,
        criterion=7,
        value=gaps[-1],
        threshold=CROSS_ORACLE_TOLERANCE,
    )
    outcome.check(
        "discrepancy_shrinks_with_ell_max",
        gaps[-1] < gaps[0],
        criterion=7,
        value=gaps[-1] / gaps[0] if gaps[0] > 0 else None,
    )
    direct = solve_canonical_KE_klt(
        pair, PerturbationSchedule.direct(), grid, settings=settings.solver
    )
    diff = np.abs(trace.limit_log_density() - direct.final.log_density)
    direct_gap = float(np.max(diff[mask]))
    outcome.check(
        "ricci_limit_vs_direct",
        direct_gap < CROSS_ORACLE_TOLERANCE,
        criterion=7,
        value=direct_gap,
        threshold=CROSS_ORACLE_TOLERANCE,
    )
    rows.append({"ell_max": None, "ricci_limit_vs_direct": direct_gap})
    outcome.tables["cross_oracle.csv"] = rows
    return outcome


def twist_independence(
    plan: AcceptancePlan, settings: Settings, seed: int
) -> ExperimentOutcome:
    """8. 兩個扭轉 (A, h_A) 的外插極限相差 < 1e−2"""
    outcome = ExperimentOutcome()
    pair = uniform_pair(THREE_POINTS, Fraction(5, 6))
    grid = grid_for_pair(pair, plan.resolution, settings.grid)
    mask = regular_mask(pair, grid, settings.limits.excision_radius)
    first, second = (
        _outer(pair, grid, plan.ell_max, settings, twist_degree=degree).final
        for degree in plan.twist_degrees
    )
    gap = first.compare(second.log_density, mask)
    outcome.check(
        "twist_independence",
        gap < TWIST_TOLERANCE,
        criterion=8,
        value=gap,
        threshold=TWIST_TOLERANCE,
    )
    outcome.profiles["twist_profiles.csv"] = (
        grid.s,
        {
            f"twist={degree}": radial_profile(grid, limit.log_density)
            for degree, limit in zip(plan.twist_degrees, (first, second))
        },
    )
    return outcome


def uniqueness(
    plan: AcceptancePlan, settings: Settings, seed: int
) -> ExperimentOutcome:
    """9. 兩個參考權重給出相同極限"""
    outcome = ExperimentOutcome()
    pair = uniform_pair(THREE_POINTS, Fraction(5, 6))
    grid = grid_for_pair(pair, plan.resolution, settings.grid)
    references = [
        MetricWeight(None, {}, pair.log_canonical),
        MetricWeight(0.1 * smooth_bump(grid), {}, pair.log_canonical),
    ]
    report = uniqueness_check(
        pair,
        None,
        references,
        grid=grid,
        m_max=plan.iteration_steps,
        tol=plan.iteration_tol,
        solver_settings=settings.solver,
        settings=settings.iteration,
    )
    outcome.check(
        "uniqueness",
        report.discrepancy < UNIQUENESS_TOLERANCE,
        criterion=9,
        value=report.discrepancy,
        threshold=UNIQUENESS_TOLERANCE,
    )
    outcome.tables["uniqueness.csv"] = [
        {"m": m, "discrepancy": value}
        for m, value in enumerate(report.per_step, start=1)
    ]
    return outcome


def _lc_sweep(
    pair: LogPair, plan: AcceptancePlan, settings: Settings
) -> TSweep:
    return sweep_t(
        pair,
        plan.t_values,
        grid_for_pair(pair, plan.resolution, settings.grid),
        settings=settings.limits,
        solver_settings=settings.solver,
        strict=False,
    )


def t_monotonicity(
    plan: AcceptancePlan, settings: Settings, seed: int
) -> ExperimentOutcome:
    """10. 三點 LC 對的 t 掃描單調且面積為 2π(3t−2)"""
    outcome = ExperimentOutcome()
    sweep = _lc_sweep(uniform_pair(THREE_POINTS, Fraction(1)), plan, settings)
    outcome.check(
        "t_monotonicity",
        sweep.min_margin >= -MONOTONICITY_TOLERANCE,
        criterion=10,
        value=sweep.min_margin,
        threshold=-MONOTONICITY_TOLERANCE,
    )
    for t, area in zip(sweep.t_values, sweep.areas):
        area_check(
            outcome,
            f"area_t_{float(t)!r}",
            area,
            float(TWO_PI * (3 * t - 2)),
            criterion=10,
            tolerance=AREA_TOLERANCE,
        )
    outcome.tables["t_sweep.csv"] = sweep.rows()
    return outcome


def lc_oracle(plan: AcceptancePlan, settings: Settings, seed: int) -> ExperimentOutcome:
    """11. 三次穿孔球面的 LC 極限對尖點雙曲解"""
    outcome = ExperimentOutcome()
    pair = uniform_pair(THREE_POINTS, Fraction(1))
    sweep = _lc_sweep(pair, plan, settings)
    if not sweep.monotone:
        outcome.check(
            "t_monotonicity",
            False,
            criterion=11,
            value=sweep.min_margin,
            threshold=-MONOTONICITY_TOLERANCE,
            detail="LC limit aborted on non-monotone sweep",
        )
        outcome.tables["t_sweep.csv"] = sweep.rows()
        return outcome
    limit = lc_limit(
        pair,
        sweep=sweep,
        settings=settings.limits,
        solver_settings=settings.solver,
        probe=False,
    )
    oracle = HyperbolicOracle.solve(
        sweep.grid, [0, 1, 2], settings=settings.limits, solver_settings=settings.solver
    )
    oracle_checks(outcome, limit, oracle, settings.limits.excision_radius)
    grid = sweep.grid
    outcome.profiles["lc_vs_hyperbolic.csv"] = (
        grid.s,
        {
            "limit": radial_profile(grid, limit.log_density),
            "hyperbolic": radial_profile(grid, oracle.log_density),
        },
    )
    return outcome


def schwarz_domination(
    plan: AcceptancePlan, settings: Settings, seed: int
) -> ExperimentOutcome:
    """12. 擴大尖點集合上的完備度量控制每個 t；漏掉除子點的集合應失敗"""
    outcome = ExperimentOutcome()
    pair = uniform_pair(FOUR_POINTS, Fraction(1), count=3)
    sweep = _lc_sweep(pair, plan, settings)
    enlarged = HyperbolicOracle.solve(
        sweep.grid,
        [0, 1, 2, 3],
        settings=settings.limits,
        solver_settings=settings.solver,
    )
    reports = schwarz_domination_check(sweep, enlarged, settings=settings.limits)
    outcome.check(
        "schwarz_domination",
        all(r.dominated for r in reports),
        criterion=12,
        value=min(r.margin for r in reports),
    )
    missing = HyperbolicOracle.solve(
        sweep.grid, [1, 2, 3], settings=settings.limits, solver_settings=settings.solver
    )
    control = schwarz_domination_check(sweep, missing, settings=settings.limits)
    outcome.check(
        "domination_negative_control_fails",
        not all(r.dominated for r in control),
        criterion=12,
        value=min(r.margin for r in control),
    )
    outcome.tables["domination.csv"] = [
        {**r.to_dict(), "punctures": "enlarged"} for r in reports
    ] + [{**r.to_dict(), "punctures": "missing_0"} for r in control]
    return outcome


def family_psh(
    plan: AcceptancePlan, settings: Settings, seed: int
) -> ExperimentOutcome:
    """13. 四點移動族的多重次調和性，LC 變體，與反號漂移的對照組"""
    outcome = ExperimentOutcome()
    family_settings = settings.family.model_copy(
        update={"base_nodes": plan.family_nodes}
    )
    start = time.perf_counter()
    rows = []
    for coefficient, tolerance in (
        (Fraction(5, 6), FAMILY_KLT_TOLERANCE),
        (Fraction(1), FAMILY_LC_TOLERANCE),
    ):
        spec = FamilySpec.four_point(coefficient, settings=family_settings)
        grid = family_grid(spec, plan.family_resolution, settings=settings.grid)
        density_field = solve_family(
            spec,
            grid,
            solver_settings=settings.solver,
            limit_settings=settings.limits,
            t_values=plan.t_values if coefficient == 1 else None,
        )
        report = psh_test(density_field, tolerance)
        outcome.check(
            f"family_psh_{coefficient}",
            report.passed,
            criterion=13,
            value=report.min_eigenvalue,
            threshold=-tolerance,
        )
        rows.append({"test": f"density_{coefficient}", **report.to_dict()})

    spec = FamilySpec.four_point(Fraction(5, 6), settings=family_settings)
    grid = family_grid(spec, plan.family_resolution, settings=settings.grid)
    for sign in (1, -1):
        report = fiber_bergman_psh_test(
            spec,
            pack=FiberWeightPack(sign=sign),
            grid=grid,
            tolerance=FAMILY_KLT_TOLERANCE,
            settings=settings.bergman,
        )
        passed = report.passed if sign > 0 else not report.passed
        name = "fiber_bergman_psh" if sign > 0 else "negative_control_fails"
        outcome.check(
            name,
            passed,
            criterion=13,
            value=report.min_eigenvalue,
            threshold=-FAMILY_KLT_TOLERANCE,
        )
        rows.append({"test": f"bergman_sign_{sign}", **report.to_dict()})

    elapsed = time.perf_counter() - start
    outcome.timings["family"] = elapsed
    outcome.check(
        "family_runtime",
        elapsed < FAMILY_SECONDS,
        criterion=13,
        threshold=FAMILY_SECONDS,
    )
    for row in rows:
        row.pop("location", None)
    outcome.tables["family_psh.csv"] = rows
    return outcome


def determinism(
    plan: AcceptancePlan, settings: Settings, seed: int
) -> ExperimentOutcome:
    """14. 相同配置與種子重現位元一致的 CSV"""
    outcome = ExperimentOutcome()
    config = determinism_config(plan, seed)
    hashes = []
    with tempfile.TemporaryDirectory(prefix="kelab-determinism-") as tmp:
        for attempt in ("first", "second"):
            store = RunStore(Path(tmp) / attempt)
            execute(config, settings, seed).write(store)
            hashes.append(
                {k: v for k, v in store.manifest.items() if k.endswith(".csv")}
            )
    identical = bool(hashes[0]) and hashes[0] == hashes[1]
    outcome.check(
        "byte_identical_csv",
        identical,
        criterion=14,
        value=len(hashes[0]),
        detail=",".join(sorted(hashes[0])),
    )
    return outcome


def determinism_config(plan: AcceptancePlan, seed: int) -> RunConfig:
    return validate_run_config(
        {
            "kind": ExperimentKind.SOLVE.value,
            "name": "determinism",
            "geometry": {
                "points": [[0, 0], [1, 0], "inf"],
                "coefficients": ["5/6", "5/6", "5/6"],
            },
            "solver": {"resolution": min(plan.resolution, 64)},
            "harness": {"seed": seed},
        }
    )


Criterion = Callable[[AcceptancePlan, Settings, int], ExperimentOutcome]

CRITERION_FUNCTIONS: Dict[int, Criterion] = {
    1: fs_fixed_point,
    2: gauss_bonnet,
    3: contraction,
    4: delta_monotonicity,
    5: bergman_constancy,
    6: holder_chain,
    7: cross_oracle,
    8: twist_independence,
    9: uniqueness,
    10: t_monotonicity,
    11: lc_oracle,
    12: schwarz_domination,
    13: family_psh,
    14: determinism,
}


def run_criterion(
    number: int, plan: AcceptancePlan, settings: Settings, seed: int
) -> ExperimentOutcome:
    """執行單一判準；模組錯誤轉為 FAIL"""
    start = time.perf_counter()
    try:
        outcome = CRITERION_FUNCTIONS[number](plan, settings, seed)
    except (KelabError, ValueError, ArithmeticError) as e:
        logger.error("Acceptance criterion crashed", criterion=number, error=str(e))
        outcome = ExperimentOutcome()
        outcome.check(
            f"criterion_{number}_error",
            False,
            criterion=number,
            detail=f"{type(e).__name__}: {e}",
        )
    outcome.timings["total"] = time.perf_counter() - start
    return outcome


def run_acceptance(
    settings: Settings,
    *,
    quick: bool = False,
    seed: int = 0,
    workers: int = 1,
    criteria: Sequence[int] = CRITERIA,
) -> ExperimentOutcome:
    """
    執行驗收套件

    Args:
        settings: 全域配置
        quick: 縮小規模
        seed: 隨機評估點的種子
        workers: joblib 工作數
        criteria: 要執行的判準編號

    Returns:
        ExperimentOutcome: 以 criterion_N/ 為前綴合併的結果
    """
    plan = AcceptancePlan.build(quick)
    unknown = [n for n in criteria if n not in CRITERION_FUNCTIONS]
    if unknown:
        raise ValueError(f"Unknown acceptance criteria: {unknown}")
    logger.info(
        "Acceptance suite started",
        quick=quick,
        criteria=list(criteria),
        workers=workers,
    )
    outcomes = Parallel(n_jobs=workers)(
        delayed(run_criterion)(number, plan, settings, seed) for number in criteria
    )
    merged = ExperimentOutcome()
    for number, outcome in zip(criteria, outcomes):
        merged.merge(outcome, f"criterion_{number:02d}")
    merged.summaries["plan"] = {
        "quick": plan.quick,
        "resolution": plan.resolution,
        "ell_max": plan.ell_max,
        "t_values": [str(t) for t in plan.t_values],
        "family_nodes": plan.family_nodes,
    }
    failed = sum(1 for c in merged.checks if c.passed is False)
    logger.info("Acceptance suite finished", checks=len(merged.checks), failed=failed)
    return merged
