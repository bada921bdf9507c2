"""
實驗執行器

每種實驗把求解結果轉成摘要、被斷言性質、CSV 表格與繪圖剖面。
"""

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from ..bergman.dynamics import BergmanSystem, OuterRun, run_outer, volume_mu
from ..core.config import Settings
from ..core.logging import get_logger
from ..discretization.grid import TWO_PI, RadialGrid, build_grid, grid_for_pair
from ..family.variation import (
    FamilySpec,
    FiberWeightPack,
    fiber_bergman_psh_test,
    psh_test,
    restriction_defect,
    solve_family,
)
from ..geometry.model import (
    CANONICAL_DEGREE,
    LogPair,
    MarkedSphereModel,
    PairClass,
    QLineBundle,
    classify_pair,
)
from ..geometry.weights import MetricWeight
from ..limits.hyperbolic import HyperbolicOracle, schwarz_domination_check
from ..limits.lc_limit import LCLimitResult, fit_cusp_profile, lc_limit
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
)
from .config import ExperimentKind, FamilyBlock, RunConfig
from .store import CheckResult, RunStore

logger = get_logger(__name__)

Profile = Tuple[np.ndarray, Dict[str, np.ndarray]]

# 判準門檻
AREA_TOLERANCE = 1e-4
MONOTONICITY_TOLERANCE = 1e-8
SCALED_OVERSHOOT = 0.03
CROSS_ORACLE_TOLERANCE = 5e-2
LC_ORACLE_TOLERANCE = 0.02
CUSP_SLOPE_TOLERANCE = 0.05
MIN_CONTRACTION_STEPS = 10
RESTRICTION_TOLERANCE = 1e-8


@dataclass
class ExperimentOutcome:
    """一次實驗的產出，由 runner 寫入磁碟"""

    summaries: Dict[str, Any] = field(default_factory=dict)
    checks: List[CheckResult] = field(default_factory=list)
    tables: Dict[str, List[Dict[str, Any]]] = field(default_factory=dict)
    profiles: Dict[str, Profile] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)

    def check(
        self,
        name: str,
        passed: Optional[bool],
        *,
        criterion: Optional[int] = None,
        value: Optional[float] = None,
        threshold: Optional[float] = None,
        detail: str = "",
    ) -> CheckResult:
        result = CheckResult(
            name=name,
            passed=None if passed is None else bool(passed),
            criterion=criterion,
            value=None if value is None else float(value),
            threshold=threshold,
            detail=detail,
        )
        self.checks.append(result)
        return result

    def merge(self, other: "ExperimentOutcome", prefix: str) -> None:
        self.summaries[prefix] = other.summaries
        self.checks.extend(other.checks)
        for name, rows in other.tables.items():
            self.tables[f"{prefix}/{name}"] = rows
        for name, profile in other.profiles.items():
            self.profiles[f"{prefix}/{name}"] = profile
        for name, seconds in other.timings.items():
            self.timings[f"{prefix}/{name}"] = seconds

    def write(self, store: RunStore) -> None:
        """表格、剖面、摘要與檢查表寫入執行目錄；計時不寫入檔案"""
        for name, rows in sorted(self.tables.items()):
            store.write_csv(name, rows)
        for name, (x, columns) in sorted(self.profiles.items()):
            store.write_profiles(f"profiles/{name}", x, columns)
        store.write_csv(
            "checks.csv",
            [
                {
                    "criterion": c.criterion,
                    "name": c.name,
                    "verdict": c.verdict,
                    "value": c.value,
                    "threshold": c.threshold,
                    "detail": c.detail,
                }
                for c in self.checks
            ],
            ["criterion", "name", "verdict", "value", "threshold", "detail"],
        )
        store.write_json("summary.json", self.summaries)


# ----------------------------------------------------------------------
# 共用工具
# ----------------------------------------------------------------------


def effective_settings(config: RunConfig, settings: Settings) -> Settings:
    """以配置的求解區塊覆寫全域配置"""
    solver = config.solver
    bergman_update: Dict[str, Any] = {
        "ell_max": solver.ell_max,
        "estimator": solver.estimator,
    }
    if solver.twist_degree is not None:
        bergman_update["twist_degree"] = solver.twist_degree
    solver_update: Dict[str, Any] = {}
    if solver.tol is not None:
        solver_update["tolerance"] = solver.tol
    return settings.model_copy(
        update={
            "grid": settings.grid.model_copy(update={"resolution": solver.resolution}),
            "bergman": settings.bergman.model_copy(update=bergman_update),
            "solver": settings.solver.model_copy(update=solver_update),
        }
    )


def radial_profile(grid: RadialGrid, values: np.ndarray) -> np.ndarray:
    """最靠近 φ = 0 的射線上的值"""
    return np.asarray(grid.tensor_view(values)[:, 0])


def angular_mean(grid: RadialGrid, values: np.ndarray) -> np.ndarray:
    return np.asarray(np.mean(grid.tensor_view(values), axis=1))


def smooth_bump(grid: RadialGrid) -> np.ndarray:
    """|z|²/(1+|z|²)：球面上的光滑函數"""
    return np.asarray(expit(2.0 * grid.node_s))


def schedule_for(
    config: RunConfig, pair: LogPair, settings: Settings
) -> PerturbationSchedule:
    solver = config.solver
    E_weight = auxiliary_weight(pair)
    if solver.delta_values:
        return PerturbationSchedule(
            tuple(solver.delta_values), settings.solver.epsilon, E_weight
        )
    if solver.schedule == "geometric":
        return PerturbationSchedule.from_settings(settings.solver, E_weight)
    return PerturbationSchedule.direct()


def area_check(
    outcome: ExperimentOutcome,
    name: str,
    area: float,
    expected: float,
    *,
    criterion: Optional[int] = None,
    tolerance: float = AREA_TOLERANCE,
) -> CheckResult:
    defect = abs(area - expected) / abs(expected)
    return outcome.check(
        name,
        defect <= tolerance,
        criterion=criterion,
        value=defect,
        threshold=tolerance,
        detail=f"area={area!r} expected={expected!r}",
    )


def regular_mask(pair: LogPair, grid: RadialGrid, radius: float) -> np.ndarray:
    return grid.excision_mask([i for i, _ in pair.divisor.entries], radius)


def scaled_overshoot(outer: OuterRun, fit_min_ell: int) -> float:
    """以 1/ℓ 外插的 (ℓ!)^{−1/ℓ}∫dV_ℓ 相對於 a·κ 的超出量"""
    states = outer.inner_runs[-1].states
    selected = [s for s in states if s.ell >= fit_min_ell] or states[-4:]
    x = np.array([1.0 / s.ell for s in selected])
    y = np.array([s.scaled_integral for s in selected])
    intercept = float(np.polyfit(x, y, 1)[1]) if len(selected) >= 2 else float(y[-1])
    bound = selected[-1].scaled_bound
    return (intercept - bound) / bound


# ----------------------------------------------------------------------
# 各實驗
# ----------------------------------------------------------------------


def run_solve(
    config: RunConfig, settings: Settings, rng: np.random.Generator
) -> ExperimentOutcome:
    """典範 KE 直接求解，含 δ 延拓的單調性"""
    outcome = ExperimentOutcome()
    pair = config.require_geometry().pair()
    report = classify_pair(pair.model, pair.divisor)
    grid = grid_for_pair(pair, config.solver.resolution, settings.grid)
    schedule = schedule_for(config, pair, settings)
    result = solve_canonical_KE_klt(
        pair, schedule, grid, config.solver.tol, settings=settings.solver
    )
    final = result.final

    outcome.summaries = {
        "pair": report.to_dict(),
        "final": final.to_dict(),
        "richardson": result.richardson.to_dict() if result.richardson else None,
    }
    outcome.check(
        "converged",
        final.converged,
        value=final.residual_norm,
        threshold=settings.solver.tolerance,
    )
    area_check(
        outcome,
        "gauss_bonnet_area",
        final.area,
        float(TWO_PI * pair.degree),
        criterion=2,
    )
    deltas = list(schedule.delta_values)
    if len(deltas) >= 2:
        margin = min(
            result.monotonicity_margin(larger, smaller)
            for larger, smaller in zip(deltas, deltas[1:])
        )
        outcome.check(
            "delta_monotonicity",
            margin >= -MONOTONICITY_TOLERANCE,
            criterion=4,
            value=margin,
            threshold=-MONOTONICITY_TOLERANCE,
        )

    outcome.tables["solve.csv"] = result.rows()
    outcome.profiles["profile.csv"] = (
        grid.s,
        {
            "log_density_ray": radial_profile(grid, final.log_density),
            "log_density_mean": angular_mean(grid, final.log_density),
        },
    )
    return outcome


def _smooth_trace(config: RunConfig, settings: Settings) -> IterationTrace:
    solver = config.solver
    assert solver.drift_degree is not None
    model = (
        config.geometry.model()
        if config.geometry is not None
        else MarkedSphereModel((0j, None))
    )
    grid = build_grid(model, solver.resolution, settings=settings.grid)
    a = solver.a or 2
    drift = MetricWeight(None, {}, QLineBundle(solver.drift_degree))
    kappa = Fraction(solver.drift_degree) + CANONICAL_DEGREE
    omega0 = MetricWeight(
        solver.perturbation * smooth_bump(grid), {}, QLineBundle(a * kappa)
    )
    return iterate_smooth(
        grid,
        drift,
        omega0,
        a,
        solver.m_max or settings.iteration.m_max,
        solver.tol,
        solver_settings=settings.solver,
        settings=settings.iteration,
    )


def run_iterate(
    config: RunConfig, settings: Settings, rng: np.random.Generator
) -> ExperimentOutcome:
    """Ricci 迭代與收縮比"""
    outcome = ExperimentOutcome()
    if config.solver.drift_degree is not None:
        trace = _smooth_trace(config, settings)
        label = "smooth"
    else:
        pair = config.require_geometry().pair()
        grid = grid_for_pair(pair, config.solver.resolution, settings.grid)
        trace = iterate_singular(
            pair,
            None,
            config.solver.a,
            schedule_for(config, pair, settings),
            config.solver.m_max or settings.iteration.m_max,
            config.solver.tol,
            grid=grid,
            solver_settings=settings.solver,
            settings=settings.iteration,
        )
        label = "singular"

    contraction = contraction_report(trace, settings.iteration.ratio_slack)
    outcome.summaries = {
        "drift": label,
        "trace": trace.to_dict(),
        "contraction": {k: v for k, v in contraction.to_dict().items() if k != "rows"},
    }
    outcome.check(
        f"contraction_{label}_a{trace.a}",
        contraction.passed and not trace.failed,
        criterion=3,
        value=contraction.fitted_ratio,
        threshold=contraction.bound + settings.iteration.ratio_slack,
    )
    outcome.check(
        f"iterations_observed_{label}_a{trace.a}",
        trace.steps >= MIN_CONTRACTION_STEPS,
        criterion=3,
        value=trace.steps,
        threshold=MIN_CONTRACTION_STEPS,
    )
    final_area = float(TWO_PI * trace.areas[-1])
    area_check(outcome, "iteration_area", trace.numeric_areas[-1], final_area)

    outcome.tables["iterate.csv"] = trace.rows()
    outcome.tables["contraction.csv"] = contraction.rows
    grid = trace.grid
    limit = trace.limit_log_density()
    outcome.profiles["profile.csv"] = (
        grid.s,
        {
            "limit_log_density_ray": radial_profile(grid, limit),
            "limit_log_density_mean": angular_mean(grid, limit),
        },
    )
    outcome.profiles["convergence.csv"] = (
        np.arange(1, trace.steps + 1, dtype=float),
        {"diff_norm": np.array(trace.diff_norms())},
    )
    return outcome


def run_bergman(
    config: RunConfig, settings: Settings, rng: np.random.Generator
) -> ExperimentOutcome:
    """雙重 Bergman 迭代，並與同一網格上的 Ricci 迭代比較"""
    outcome = ExperimentOutcome()
    pair = config.require_geometry().pair()
    grid = grid_for_pair(pair, config.solver.resolution, settings.grid)
    system = BergmanSystem.singular(
        pair, None, config.solver.a, grid=grid, settings=settings.bergman
    )
    rounds = config.solver.m_max or 1
    trace = iterate_singular(
        pair,
        None,
        system.a,
        None,
        rounds,
        config.solver.tol,
        grid=grid,
        solver_settings=settings.solver,
        settings=settings.iteration,
    )
    mask = regular_mask(pair, grid, settings.limits.excision_radius)
    outer = run_outer(
        system,
        ell_max=config.solver.ell_max,
        m_max=rounds,
        trace=trace,
        mask=mask,
        settings=settings.bergman,
    )

    holder = all(run.holder_ok for run in outer.inner_runs)
    overshoot = scaled_overshoot(outer, settings.bergman.fit_min_ell)
    outcome.summaries = {
        "outer": outer.to_dict(),
        "volume": volume_mu(pair, a=system.a).to_dict(),
    }
    outcome.check("holder_chain", holder, criterion=6)
    outcome.check(
        "scaled_integral_overshoot",
        overshoot <= SCALED_OVERSHOOT,
        criterion=6,
        value=overshoot,
        threshold=SCALED_OVERSHOOT,
    )
    if outer.ricci_gaps:
        gap = max(outer.ricci_gaps)
        outcome.check(
            "bergman_vs_ricci",
            gap < CROSS_ORACLE_TOLERANCE,
            criterion=7,
            value=gap,
            threshold=CROSS_ORACLE_TOLERANCE,
        )
    for index, error in enumerate(outer.area_errors, start=1):
        outcome.check(
            f"bergman_area_m{index}",
            error <= SCALED_OVERSHOOT,
            value=error,
            threshold=SCALED_OVERSHOOT,
        )

    outcome.tables["bergman_inner.csv"] = outer.rows()
    outcome.tables["bergman_outer.csv"] = outer.outer_rows()
    final = outer.final.log_density
    outcome.profiles["profile.csv"] = (
        grid.s,
        {
            "bergman_log_density_ray": radial_profile(grid, final),
            "ricci_log_density_ray": radial_profile(
                grid, trace.log_densities[min(rounds, trace.steps) - 1]
            ),
        },
    )
    return outcome


def _sweep(config: RunConfig, settings: Settings, pair: LogPair) -> TSweep:
    grid = grid_for_pair(pair, config.solver.resolution, settings.grid)
    return sweep_t(
        pair,
        config.solver.t_fractions,
        grid,
        config.solver.tol,
        settings=settings.limits,
        solver_settings=settings.solver,
        strict=False,
    )


def _sweep_checks(outcome: ExperimentOutcome, sweep: TSweep) -> None:
    outcome.check(
        "t_monotonicity",
        sweep.min_margin >= -MONOTONICITY_TOLERANCE,
        criterion=10,
        value=sweep.min_margin,
        threshold=-MONOTONICITY_TOLERANCE,
    )
    defects = [
        abs(area - expected) / expected
        for area, expected in zip(sweep.areas, sweep.expected_areas)
    ]
    worst = max(defects)
    outcome.check(
        "t_sweep_areas",
        worst <= AREA_TOLERANCE,
        criterion=10,
        value=worst,
        threshold=AREA_TOLERANCE,
    )


def _sweep_profiles(sweep: TSweep) -> Profile:
    grid = sweep.grid
    columns = {
        f"t={t}": radial_profile(grid, log_density)
        for t, log_density in zip(sweep.t_values, sweep.log_densities)
    }
    return grid.s, columns


def run_sweep_t(
    config: RunConfig, settings: Settings, rng: np.random.Generator
) -> ExperimentOutcome:
    """沿 t 的典範解與單調性"""
    outcome = ExperimentOutcome()
    pair = config.require_geometry().pair()
    sweep = _sweep(config, settings, pair)
    outcome.summaries = {"pair": pair.to_dict(), "sweep": sweep.to_dict()}
    _sweep_checks(outcome, sweep)
    outcome.tables["sweep_t.csv"] = sweep.rows()
    outcome.profiles["profile.csv"] = _sweep_profiles(sweep)
    return outcome


def oracle_checks(
    outcome: ExperimentOutcome,
    limit: LCLimitResult,
    oracle: HyperbolicOracle,
    radius: float,
) -> None:
    """LC 極限對雙曲解：正則集上的相對差與尖點剖面"""
    deviation = limit.compare(oracle.log_density, oracle.regular_mask(radius))
    outcome.check(
        "lc_limit_vs_hyperbolic",
        deviation <= LC_ORACLE_TOLERANCE,
        criterion=11,
        value=deviation,
        threshold=LC_ORACLE_TOLERANCE,
    )
    rows = []
    worst = 0.0
    for index, fit in sorted(limit.cusp_fits.items()):
        reference = fit_cusp_profile(oracle.grid, oracle.log_density, index)
        error = abs(fit.beta - reference.beta) / abs(reference.beta)
        worst = max(worst, error)
        rows.append(
            {
                **fit.to_dict(),
                "oracle_beta": reference.beta,
                "oracle_alpha": reference.alpha,
                "relative_error": error,
            }
        )
    outcome.tables["cusp_fits.csv"] = rows
    outcome.check(
        "cusp_loglog_slope",
        bool(rows) and worst <= CUSP_SLOPE_TOLERANCE,
        criterion=11,
        value=worst,
        threshold=CUSP_SLOPE_TOLERANCE,
    )


def run_lc_limit(
    config: RunConfig, settings: Settings, rng: np.random.Generator
) -> ExperimentOutcome:
    """KLT → LC 極限、雙曲驗證與 Schwarz 控制"""
    outcome = ExperimentOutcome()
    pair = config.require_geometry().pair()
    sweep = _sweep(config, settings, pair)
    _sweep_checks(outcome, sweep)
    outcome.tables["sweep_t.csv"] = sweep.rows()
    if not sweep.monotone:
        logger.error(
            "LC limit aborted on non-monotone sweep", min_margin=sweep.min_margin
        )
        outcome.summaries = {
            "pair": pair.to_dict(),
            "sweep": sweep.to_dict(),
            "aborted": "non-monotone sweep",
        }
        outcome.profiles["profile.csv"] = _sweep_profiles(sweep)
        return outcome
    limit = lc_limit(
        pair, sweep=sweep, settings=settings.limits, solver_settings=settings.solver
    )
    outcome.check("limit_dominates_sweep", limit.dominates_sweep())
    outcome.summaries = {"pair": pair.to_dict(), "limit": limit.to_dict()}
    if limit.azd is not None:
        outcome.tables["azd_probe.csv"] = limit.azd.rows()

    grid = sweep.grid
    columns = {"limit_log_density_ray": radial_profile(grid, limit.log_density)}
    cusps = [i for i, d in pair.divisor.entries if d == 1]
    if len(cusps) >= 3:
        oracle = HyperbolicOracle.solve(
            grid, cusps, settings=settings.limits, solver_settings=settings.solver
        )
        outcome.summaries["oracle"] = oracle.to_dict()
        oracle_checks(outcome, limit, oracle, settings.limits.excision_radius)
        domination = schwarz_domination_check(
            sweep, oracle, settings=settings.limits
        )
        outcome.tables["domination.csv"] = [r.to_dict() for r in domination]
        outcome.check(
            "schwarz_domination",
            all(r.dominated for r in domination),
            criterion=12,
            value=min(r.margin for r in domination),
        )
        columns["oracle_log_density_ray"] = radial_profile(grid, oracle.log_density)
    outcome.profiles["profile.csv"] = (grid.s, columns)
    return outcome


def family_spec(block: FamilyBlock, settings: Settings) -> FamilySpec:
    update: Dict[str, Any] = {}
    if block.base_nodes is not None:
        update["base_nodes"] = block.base_nodes
    if block.base_radius is not None:
        update["base_radius"] = block.base_radius
    return FamilySpec.four_point(
        Fraction(block.coefficient),
        moving=block.moving,
        settings=settings.family.model_copy(update=update),
    )


def run_family(
    config: RunConfig, settings: Settings, rng: np.random.Generator
) -> ExperimentOutcome:
    """族的多重次調和性；drift_sign = −1 為預期失敗的對照組"""
    outcome = ExperimentOutcome()
    block = config.family or FamilyBlock()
    spec = family_spec(block, settings)

    if block.bergman:
        pack = FiberWeightPack(gamma=block.gamma, sign=block.drift_sign)
        report = fiber_bergman_psh_test(
            spec,
            pack=pack,
            resolution=config.solver.resolution,
            tolerance=block.tolerance,
            grid_settings=settings.grid,
            settings=settings.bergman,
        )
    else:
        density_field = solve_family(
            spec,
            tol=config.solver.tol,
            resolution=config.solver.resolution,
            grid_settings=settings.grid,
            solver_settings=settings.solver,
            limit_settings=settings.limits,
            t_values=config.solver.t_fractions,
        )
        outcome.summaries["field"] = density_field.to_dict()
        outcome.tables["family_fibers.csv"] = density_field.base_rows()
        outcome.tables["family_field.csv"] = density_field.rows()
        outcome.check(
            "family_areas",
            density_field.area_defect <= AREA_TOLERANCE,
            value=density_field.area_defect,
            threshold=AREA_TOLERANCE,
        )
        base = density_field.base
        picks = rng.choice(len(base), size=min(2, len(base)), replace=False)
        defect = restriction_defect(
            density_field,
            [base[int(k)][2] for k in sorted(picks)],
            config.solver.tol,
            solver_settings=settings.solver,
            limit_settings=settings.limits,
        )
        outcome.check(
            "fiber_restriction",
            defect <= RESTRICTION_TOLERANCE,
            value=defect,
            threshold=RESTRICTION_TOLERANCE,
        )
        report = psh_test(density_field, block.tolerance)

    outcome.summaries["psh"] = report.to_dict()
    outcome.tables["family_psh.csv"] = report.base_rows
    if block.bergman and block.drift_sign < 0:
        outcome.check(
            "negative_control_fails",
            not report.passed,
            criterion=13,
            value=report.min_eigenvalue,
            threshold=-block.tolerance,
        )
    else:
        outcome.check(
            f"family_psh_{report.label}",
            report.passed,
            criterion=13,
            value=report.min_eigenvalue,
            threshold=-block.tolerance,
        )
        outcome.check("family_bounded_above", report.bounded_above)
    return outcome


Executor = Callable[[RunConfig, Settings, np.random.Generator], ExperimentOutcome]

EXPERIMENTS: Dict[str, Executor] = {
    ExperimentKind.SOLVE.value: run_solve,
    ExperimentKind.ITERATE.value: run_iterate,
    ExperimentKind.BERGMAN.value: run_bergman,
    ExperimentKind.SWEEP_T.value: run_sweep_t,
    ExperimentKind.LC_LIMIT.value: run_lc_limit,
    ExperimentKind.FAMILY.value: run_family,
}


def execute(
    config: RunConfig, settings: Settings, seed: Optional[int] = None
) -> ExperimentOutcome:
    """
    執行單一實驗

    seed 決定隨機取樣的評估點（例如族的限制檢查）。

    Raises:
        KelabError: 任一模組的錯誤，由 runner 轉為失敗紀錄
        ValueError: 不支援的實驗種類
    """
    kind = ExperimentKind(config.kind).value
    if kind not in EXPERIMENTS:
        raise ValueError(f"Experiment kind '{kind}' has no single-run executor")
    effective = effective_settings(config, settings)
    logger.info("Experiment started", kind=kind, name=config.name)
    outcome = EXPERIMENTS[kind](config, effective, np.random.default_rng(seed))
    logger.info(
        "Experiment finished",
        kind=kind,
        name=config.name,
        checks=len(outcome.checks),
        failed=sum(1 for c in outcome.checks if c.passed is False),
    )
    return outcome


def pair_label(pair: LogPair) -> str:
    return ",".join(f"{pair.model.label(i)}:{d}" for i, d in pair.divisor.entries)


def classification_rows(pairs: Sequence[LogPair]) -> List[Dict[str, Any]]:
    rows = []
    for pair in pairs:
        report = classify_pair(pair.model, pair.divisor)
        rows.append(
            {
                "pair": pair_label(pair),
                "class": report.classification.value,
                "degree": str(report.degree),
                "log_general_type": report.log_general_type,
                "a": report.denominator,
                "lc": report.classification == PairClass.LC,
            }
        )
    return rows
