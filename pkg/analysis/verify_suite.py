"""
Desk-scale verification suites. Each suite returns named pass/fail checks with
the measured value and the threshold it was held to.

    rhs          direct and FFT right-hand sides agree, mass closure
    equilibrium  recursion identities, fixed point, nonexistence witnesses
    dynamics     m0 law, conservation/gelation dichotomy, convergence to equilibrium
    transform    density extraction, Taylor remainder bound
    hj           stationarity, decay at m = 1, observed order, ODE cross-check, shape bounds
    lemma        h+- scan
"""

import logging
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List

import numpy as np

from analysis.analysis_checks import (convergence_report, gelation_onset_study, m0_closed_form,
                                      verify_hpm)
from kinetics.equilibrium_recursion import recursion, recursion_exact, validate
from kinetics.integrator_rk45 import integrate
from kinetics.rhs_coag_frag import rhs
from kinetics.size_distribution import (InitialDataSpec, SimulationConfig, SizeDistribution,
                                        build_initial)
from transforms.hj_solver import (HJProblem, HJState, evolve_F, evolve_G, refine_and_estimate_order,
                                  slope_diagnostics, stationary_residual_G)
from transforms.transform_bernstein import (check_complete_monotonicity, extract_density,
                                            extraction_nodes, taylor_remainder_check, transform_F,
                                            transform_G, uniform_x_grid, uniform_z_grid)

logger = logging.getLogger(__name__)

SUITES = ("rhs", "equilibrium", "dynamics", "transform", "hj", "lemma")
ROUNDING_SLACK = 1e-15     # gaps already at the rounding floor may move by a few ulps


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""


@dataclass
class VerifyReport:
    suite: str
    checks: List[CheckResult] = field(default_factory=list)
    elapsed: Dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> List[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> Dict[str, object]:
        return {
                "suite"   : self.suite,
                "passed"  : self.passed,
                "checks"  : [asdict(c) for c in self.checks],
                "elapsed" : self.elapsed,
        }


def _below(name: str, value: float, threshold: float, detail: str = "") -> CheckResult:
    return CheckResult(name, bool(value <= threshold), float(value), float(threshold), detail)


def _above(name: str, value: float, threshold: float, detail: str = "") -> CheckResult:
    return CheckResult(name, bool(value >= threshold), float(value), float(threshold), detail)


def suite_rhs(quick: bool = False) -> List[CheckResult]:
    rng     = np.random.default_rng(20240611)
    worst   = 0.0
    closure = 0.0
    for _ in range(50 if quick else 200):
        n   = int(rng.integers(2, 65))
        rho = SizeDistribution(rng.random(n) * rng.random(n))
        direct, fast = rhs(rho, "direct"), rhs(rho, "fft")
        scale = max(float(np.max(np.abs(direct.d_densities))), 1e-300)
        worst = max(worst, float(np.max(np.abs(fast.d_densities - direct.d_densities))) / scale)
        m1    = float(np.dot(rho.sizes, rho.densities))
        closure = max(closure, abs(direct.mass_residual()) / (m1 * m1 + m1))
    return [
            _below("rhs.fft_matches_direct", worst, 1e-12, "max relative deviation over random N <= 64"),
            _below("rhs.mass_closure", closure, 1e-10, "|sum j d + gel flux| / (m1^2 + m1)"),
    ]


def suite_equilibrium(quick: bool = False) -> List[CheckResult]:
    length  = 1024 if quick else 2048
    results = []
    for m in (0.1, 0.3, 0.5):
        table  = recursion(m, length)
        report = validate(table)
        half   = validate(recursion(m, length // 2))
        results += [
                _above(f"equilibrium.nonnegative[m={m}]", float(table.values.min()), 0.0),
                _below(f"equilibrium.rhs_residual[m={m}]", report.rhs_residual, 1e-8, f"L = {length}"),
                _below(f"equilibrium.m0_gap_nonincreasing[m={m}]", report.m0_gap - half.m0_gap, ROUNDING_SLACK),
                _below(f"equilibrium.m1_gap_nonincreasing[m={m}]", report.m1_gap - half.m1_gap, ROUNDING_SLACK),
        ]

    witness = recursion_exact(Fraction(2), 1)[0]
    zeros   = recursion(1.0, 100).values
    results += [
            CheckResult("equilibrium.witness_m2", witness == Fraction(-2, 3), float(witness), -2 / 3,
                        f"exact rho~(1) = {witness}"),
            _below("equilibrium.witness_m2_float", abs(recursion(2.0, 1).value(1) + 2 / 3), 1e-15),
            _below("equilibrium.zero_at_m1", float(np.max(np.abs(zeros))), 1e-15),
    ]
    return results


def suite_dynamics(quick: bool = False) -> List[CheckResult]:
    results = []

    # m0 law and conservation in the mass-conserving regime
    spec = InitialDataSpec.monodisperse(1, 0.3)
    cfg  = SimulationConfig(truncation_n=512, t_end=20.0, output_stride=0, output_dt=0.25)
    traj = integrate(build_initial(spec, 512), cfg)
    law  = m0_closed_form(0.3, 0.3, traj.times)
    results += [
            _below("dynamics.m0_law", float(np.max(np.abs(traj.moment_series("m0") - law))), 1e-6),
            _below("dynamics.gel_free", float(traj.gel_mass_series()[-1]), 1e-10),
            _below("dynamics.mass_conserved", float(traj.mass_defect().max()),
                   (cfg.abs_tol + cfg.rel_tol * 0.3) * cfg.t_end * 10),
    ]

    # gelation for m = 2
    sizes = (1024, 2048) if quick else (4096, 8192)
    study = gelation_onset_study(2.0, sizes, t_end=3.0, output_dt=0.01)
    first = study[0].onset_time
    results.append(CheckResult("dynamics.gelation_by_t3", first is not None, first or float("nan"), 3.0,
                               f"N = {sizes[0]}"))
    change = study[1].relative_change
    results.append(CheckResult("dynamics.onset_robust", change is not None and change < 0.1,
                               float("nan") if change is None else change, 0.1, f"N = {sizes}"))

    # convergence to equilibrium
    t_end = 50.0 if quick else 100.0
    cfg   = SimulationConfig(truncation_n=512, t_end=t_end, output_stride=0, output_dt=t_end / 2)
    traj  = integrate(build_initial(spec, 512), cfg)
    conv  = convergence_report(traj, recursion(0.3, 2048), 20)
    results += [
            _below("dynamics.convergence", conv.sup_errors[-1], 1e-4 if not quick else 1e-3, f"t = {t_end}"),
            _below("dynamics.error_decreasing", conv.sup_errors[-1] - conv.sup_errors[-2],
                   cfg.abs_tol + cfg.rel_tol * 0.3, f"t = {t_end / 2:g} to {t_end:g}"),
    ]
    return results


def suite_transform(quick: bool = False) -> List[CheckResult]:
    rng = np.random.default_rng(7)
    ratios = []
    for l in range(1, 6):
        rho    = SizeDistribution(0.1 * 0.8 ** np.arange(1, 13) * (1.0 + 0.5 * rng.random(12)))
        errors = []
        for h in (0.01, 0.005):
            g = transform_G(rho, extraction_nodes(l, h))
            errors.append(abs(extract_density(g, l, h) - rho.density(l)))
        ratios.append(errors[0] / errors[1])

    violations = 0
    for _ in range(25 if quick else 100):
        n   = int(rng.integers(2, 40))
        raw = rng.random(n)
        rho = SizeDistribution(raw / max(float(np.dot(np.arange(1, n + 1), raw)), 1.0))
        for z in (0.1, 0.5, 0.9):
            for k in (1, 5, 20):
                violations += not taylor_remainder_check(rho, z, k).satisfied
    return [
            CheckResult("transform.halving_ratio", all(1.6 <= r <= 2.4 for r in ratios),
                        float(min(ratios)), 1.6, "ratios " + ", ".join(f"{r:.3f}" for r in ratios)),
            _below("transform.taylor_violations", float(violations), 0.0),
    ]


def suite_hj(quick: bool = False) -> List[CheckResult]:
    results = []
    m       = 0.3
    table   = recursion(m, 2048)
    tilde   = SizeDistribution(table.values)

    g_tilde = transform_G(tilde, uniform_z_grid(1e-3))
    results.append(_below("hj.stationary_residual", stationary_residual_G(g_tilde, m), 1e-4, "dz = 1e-3"))

    decay = HJState.initial(transform_G(SizeDistribution.from_sizes({1: 1.0}, 2), uniform_z_grid(2e-3)))
    final = evolve_G(decay, 30.0).final.grid.restrict(0.9)
    results.append(_below("hj.decay_m1", float(np.max(np.abs(final.values))), 1e-3, "t = 30"))

    start = SizeDistribution.from_sizes({1: m}, 512)
    problem = HJProblem(mass_m=m, initial=lambda z: m * (1.0 - z), t_final=1.0)
    order = refine_and_estimate_order(problem, [4e-3, 2e-3, 1e-3])
    results.append(CheckResult("hj.observed_order", order.order is not None and 0.7 <= order.order <= 1.3,
                               float("nan") if order.order is None else order.order, 1.0))

    dz   = 1e-3
    hj   = evolve_G(HJState.initial(transform_G(start, uniform_z_grid(dz))), 1.0).final.grid
    traj = integrate(start, SimulationConfig(truncation_n=512, t_end=1.0, output_stride=0, output_dt=0.5))
    ode  = transform_G(traj.final, hj.nodes)
    results.append(_below("hj.matches_ode", float(np.max(np.abs(hj.values - ode.values))), 5 * dz * m))

    # shape bounds along the x-form run and the z-form of the ODE trajectory
    times = np.linspace(0.5, 5.0, 10)
    run   = evolve_F(HJState.initial(transform_F(start, uniform_x_grid(0.01))), 5.0, times)
    worst_fx_low, worst_fx_high, worst_fxx = 0.0, 0.0, -np.inf
    for snap in run.snapshots:
        diag = slope_diagnostics(snap.grid)
        worst_fx_low  = min(worst_fx_low, diag.min_fx)
        worst_fx_high = max(worst_fx_high, diag.max_fx)
        worst_fxx     = max(worst_fxx, diag.max_fxx)
    results += [
            _above("hj.fx_lower", worst_fx_low, -1e-6),
            _below("hj.fx_upper", worst_fx_high, m + 1e-6),
            _below("hj.fxx_upper", worst_fxx, 1e-6),
    ]

    geometric = build_initial(InitialDataSpec.geometric(0.5, m), 512)
    cfg   = SimulationConfig(truncation_n=512, t_end=5.0, output_stride=0, output_dt=0.5)
    worst = -np.inf
    for snap in integrate(geometric, cfg).snapshots[1:]:
        report = check_complete_monotonicity(transform_G(snap, uniform_z_grid(1e-3, upper=0.9)), 4, 0.01)
        worst  = max(worst, max(o.worst - o.tolerance for o in report.orders))
    results.append(_below("hj.complete_monotonicity", worst, 0.0, "Delta_h^k G - tol_k, k <= 4"))
    return results


def suite_lemma(quick: bool = False) -> List[CheckResult]:
    report = verify_hpm(np.linspace(0.0, 0.5, 501), np.linspace(0.0, 1.0, 1001))
    region = report.violation_region
    return [
            _below("lemma.max_hminus", report.max_hminus_gap, 1e-12),
            CheckResult("lemma.hplus_threshold", all(row.agrees for row in report.rows),
                        float(region[0]) if region else float("nan"), 1 / 3,
                        f"min h_+ > -1 fails for delta in {region}"),
    ]


SUITE_RUNNERS: Dict[str, Callable[[bool], List[CheckResult]]] = {
        "rhs"         : suite_rhs,
        "equilibrium" : suite_equilibrium,
        "dynamics"    : suite_dynamics,
        "transform"   : suite_transform,
        "hj"          : suite_hj,
        "lemma"       : suite_lemma,
}


def run_suite(suite: str = "all", quick: bool = False) -> VerifyReport:
    if suite != "all" and suite not in SUITE_RUNNERS:
        raise ValueError(f"Invalid suite '{suite}', expected one of {', '.join(SUITES)} or all")

    names  = SUITES if suite == "all" else (suite,)
    report = VerifyReport(suite=suite)
    for name in names:
        started = time.perf_counter()
        checks  = SUITE_RUNNERS[name](quick)
        report.elapsed[name] = time.perf_counter() - started
        report.checks.extend(checks)
        logger.info("suite %s: %d/%d checks passed in %.2f s", name,
                    sum(c.passed for c in checks), len(checks), report.elapsed[name])
    return report
