"""
Closed-form references and quantitative checks tying simulations, transforms and
the stationary table together.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from kinetics.equilibrium_recursion import EquilibriumTable
from kinetics.integrator_rk45 import Trajectory, detect_gelation, integrate
from kinetics.rhs_coag_frag import fft_convolve, resolve_mode
from kinetics.size_distribution import (InitialDataSpec, SimulationConfig, SizeDistribution,
                                        build_initial)
from transforms.transform_bernstein import transform_F_derivative
from utils.errors import DomainError, MassMismatch

logger = logging.getLogger(__name__)

TestFunction = Union[Callable[[np.ndarray], np.ndarray], np.ndarray, float]

RADICAND_FLOOR = -1e-14      # rounding allowance before a negative radicand is an error
HMINUS_TOL     = 1e-12


def m0_closed_form(m: float, m0_initial: float, t):
    """m0(t) = m - m^2 + exp(-t/2) (m0(0) - (m - m^2)) for the gel-free dynamics."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise ValueError("m0_closed_form needs t >= 0")
    rest  = m - m * m
    value = rest + np.exp(-0.5 * t) * (m0_initial - rest)
    return float(value) if value.ndim == 0 else value


def gelation_time_bound(m: float, m0_initial: float) -> Optional[float]:
    """Root of the m0 law for m > 1; the number density cannot stay positive past it."""
    if not m0_initial > 0.0:
        raise ValueError(f"m0_initial must be positive, got {m0_initial}")
    if m <= 1.0:
        return None
    excess = m * m - m
    return float(2.0 * np.log((m0_initial + excess) / excess))


def _test_values(g: TestFunction, sizes: np.ndarray) -> np.ndarray:
    if callable(g):
        return np.asarray(g(sizes), dtype=float) * np.ones_like(sizes)
    values = np.asarray(g, dtype=float)
    if values.ndim == 0:
        return np.full(sizes.size, float(values))
    if values.size != sizes.size:
        raise ValueError(f"test function has {values.size} values for {sizes.size} sizes")
    return values


def weak_form_rate(rho: SizeDistribution, g: TestFunction, mode: str = "direct") -> float:
    """
    d/dt sum_j g(j) rho(j) predicted by the weak form for a(j,k) = jk, b = 1:

        1/2 sum_l g(l) (u*u)(l) - (sum_j g(j) u(j)) m1
        + sum_j rho(j) (sum_{k<j} g(k) - (j - 1) g(j) / 2)

    with u(j) = j rho(j). Products larger than N carry g = 0.
    """
    sizes = rho.sizes
    n     = sizes.size
    gv    = _test_values(g, sizes)
    u     = sizes * rho.densities
    m1    = float(u.sum())

    conv = fft_convolve(u, u) if resolve_mode(mode, n) == "fft" else np.convolve(u, u)
    coag = 0.5 * float(np.dot(gv[1:], conv[: n - 1])) - float(np.dot(gv, u)) * m1

    below = np.concatenate(([0.0], np.cumsum(gv)[:-1]))      # sum_{k<j} g(k)
    frag  = float(np.dot(rho.densities, below - 0.5 * (sizes - 1.0) * gv))
    return coag + frag


def weak_form_residual(traj: Trajectory, g: TestFunction, mode: str = "auto") -> np.ndarray:
    """Time derivative of sum g rho (second-order differences on the output times) minus weak_form_rate."""
    if len(traj) < 3:
        raise ValueError(f"weak_form_residual needs at least 3 output times, got {len(traj)}")
    observed = np.array([np.dot(_test_values(g, s.sizes), s.densities) for s in traj.snapshots])
    slope    = np.gradient(observed, traj.times, edge_order=2)
    rates    = np.array([weak_form_rate(s, g, mode) for s in traj.snapshots])
    return slope - rates


# h+- lemma

def h_pm(r, delta: float):
    """(h_-(r), h_+(r)) = -1/2 - r(1+delta) -/+ sqrt(1/4 + r^2 (1-delta)^2 + r (1 - 3 delta))."""
    r = np.asarray(r, dtype=float)
    radicand = 0.25 + r ** 2 * (1.0 - delta) ** 2 + r * (1.0 - 3.0 * delta)
    if np.any(radicand < RADICAND_FLOOR):
        worst = float(np.min(radicand))
        raise DomainError(f"verify_hpm: radicand {worst:.3e} < 0 at delta = {delta}")
    root = np.sqrt(np.maximum(radicand, 0.0))
    base = -0.5 - r * (1.0 + delta)
    return base - root, base + root


def hplus_threshold(delta: float) -> float:
    """r*(delta) = (1 - delta) / (2 delta): h_+(r) > -1 exactly for r < r*."""
    return float("inf") if delta == 0.0 else (1.0 - delta) / (2.0 * delta)


@dataclass(frozen=True)
class HpmRow:
    delta: float
    max_hminus: float
    max_hminus_at: float
    hminus_nonincreasing: bool
    min_hplus: float
    min_hplus_at: float
    r_star: float
    bound_holds: bool            # min h_+ > -1 on the r grid
    predicted_holds: bool        # r* > r_max
    agrees: bool


@dataclass
class HpmReport:
    rows: List[HpmRow] = field(default_factory=list)

    @property
    def max_hminus_gap(self) -> float:
        return max(abs(row.max_hminus + 1.0) for row in self.rows)

    @property
    def violation_region(self) -> Optional[List[float]]:
        """[first, last] delta where min h_+ <= -1 on the grid."""
        failing = [row.delta for row in self.rows if not row.bound_holds]
        return [min(failing), max(failing)] if failing else None

    @property
    def passed(self) -> bool:
        return (self.max_hminus_gap <= HMINUS_TOL
                and all(row.max_hminus_at == 0.0 and row.hminus_nonincreasing and row.agrees for row in self.rows))

    def to_dict(self) -> Dict[str, object]:
        return {
                "passed"           : self.passed,
                "max_hminus_gap"   : self.max_hminus_gap,
                "violation_region" : self.violation_region,
                "rows"             : [asdict(row) for row in self.rows],
        }


def verify_hpm(delta_grid, r_grid) -> HpmReport:
    """
    Scan h_- and h_+ on the grids. max h_- = -1 at r = 0 holds for every delta in
    [0, 1/2]; min h_+ > -1 holds exactly where r*(delta) exceeds the largest r,
    which is delta < 1/3 on [0, 1]. Both are checked, and the region where the
    lower bound on h_+ fails is reported.
    """
    deltas = np.asarray(delta_grid, dtype=float)
    r      = np.asarray(r_grid, dtype=float)

    if np.any(deltas < 0.0) or np.any(deltas > 0.5):
        raise ValueError("verify_hpm: delta grid must lie in [0, 1/2]")
    if r.size < 2 or r[0] != 0.0 or np.any(r > 1.0) or np.any(np.diff(r) <= 0.0):
        raise ValueError("verify_hpm: r grid must be increasing in [0, 1] and start at r = 0")
    if np.max(np.diff(r)) > 1e-3 + 1e-15:
        raise ValueError("verify_hpm: r grid step must be at most 1e-3")

    report = HpmReport()
    for delta in deltas:
        h_minus, h_plus = h_pm(r, float(delta))
        i_max = int(np.argmax(h_minus))
        i_min = int(np.argmin(h_plus))
        r_star = hplus_threshold(float(delta))

        bound_holds     = bool(h_plus[i_min] > -1.0)
        predicted_holds = bool(r_star > r[-1])
        report.rows.append(HpmRow(
                delta=float(delta),
                max_hminus=float(h_minus[i_max]),
                max_hminus_at=float(r[i_max]),
                hminus_nonincreasing=bool(np.all(np.diff(h_minus) <= 1e-15)),
                min_hplus=float(h_plus[i_min]),
                min_hplus_at=float(r[i_min]),
                r_star=r_star,
                bound_holds=bound_holds,
                predicted_holds=predicted_holds,
                agrees=bound_holds == predicted_holds,
        ))

    region = report.violation_region
    if region is not None:
        logger.warning("min h_+ > -1 fails for delta in [%.4g, %.4g]", region[0], region[1])
    return report


# convergence to equilibrium

@dataclass(frozen=True)
class ConvergenceReport:
    times: List[float]
    sup_errors: List[float]
    monotone_tail_flag: bool
    k: int

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)


def convergence_report(traj: Trajectory, table: EquilibriumTable, k: int) -> ConvergenceReport:
    """sup_{l<=k} |rho(l, t) - rho~(l)| per output time."""
    if len(traj) == 0:
        raise ValueError("convergence_report needs a nonempty trajectory")
    initial_mass = traj.moments[0].m1 + traj.snapshots[0].gel_mass
    if abs(initial_mass - table.mass_m) > 1e-9:
        raise MassMismatch(f"convergence_report: trajectory mass {initial_mass:.12g} != table mass {table.mass_m:.12g}")
    if not 0.0 < table.mass_m < 0.5:
        raise ValueError(f"convergence_report needs a mass in (0, 1/2), got {table.mass_m}")
    if k < 0:
        raise ValueError(f"k must be nonnegative, got {k}")
    if k == 0:
        return ConvergenceReport(times=[], sup_errors=[], monotone_tail_flag=True, k=0)
    if k > table.length_l or k > traj.snapshots[0].truncation_n:
        raise ValueError(f"k = {k} exceeds the table length or the truncation")

    target = table.values[:k]
    errors = [float(np.max(np.abs(s.densities[:k] - target))) for s in traj.snapshots]
    tail   = np.asarray(errors[len(errors) // 2:])
    flag   = bool(np.all(np.diff(tail) <= 1e-9))
    return ConvergenceReport(times=[float(t) for t in traj.times], sup_errors=errors, monotone_tail_flag=flag, k=k)


# derivative bounds of F

@dataclass(frozen=True)
class DerivativeBound:
    order: int
    sup_value: float      # sup over snapshots and x of x**(k-1) |d^k F / dx^k|
    bound: float          # m1 ((k - 1) / e)**(k - 1)

    @property
    def within(self) -> bool:
        return self.sup_value <= self.bound * (1.0 + 1e-12)


def derivative_bound_profile(traj: Trajectory, k_max: int, x_upper: float = 5.0,
                             samples: int = 200) -> List[DerivativeBound]:
    """Weighted derivatives x**(k-1) d^k F stay bounded on (0, x_upper) uniformly in time."""
    if k_max < 1:
        raise ValueError(f"k_max must be positive, got {k_max}")
    x    = np.linspace(x_upper / samples, x_upper, samples)
    mass = max(m.m1 for m in traj.moments)

    profile = []
    for k in range(1, k_max + 1):
        weight = x ** (k - 1)
        sup    = max(float(np.max(weight * np.abs(transform_F_derivative(s, x, k)))) for s in traj.snapshots)
        bound  = mass * ((k - 1) / np.e) ** (k - 1) if k > 1 else mass
        profile.append(DerivativeBound(order=k, sup_value=sup, bound=float(bound)))
    return profile


# gelation onset

@dataclass(frozen=True)
class GelationOnset:
    truncation_n: int
    onset_time: Optional[float]
    relative_change: Optional[float]   # against the previous truncation


def gelation_onset_study(m: float, n_values: Sequence[int], t_end: float, threshold: float = 0.01,
                         spec: Optional[InitialDataSpec] = None, output_dt: float = 0.01,
                         abs_tol: float = 1e-12, rel_tol: float = 1e-10) -> List[GelationOnset]:
    """Onset of gelation at each truncation; small relative changes mean the onset is truncation-robust."""
    spec = spec or InitialDataSpec(kind="monodisperse", declared_mass=m)
    rows: List[GelationOnset] = []
    previous = None
    for n in n_values:
        cfg   = SimulationConfig(truncation_n=n, t_end=t_end, output_stride=0, output_dt=output_dt,
                                 abs_tol=abs_tol, rel_tol=rel_tol)
        onset = detect_gelation(integrate(build_initial(spec, n), cfg), threshold)
        change = None
        if onset is not None and previous is not None:
            change = abs(onset - previous) / previous
        rows.append(GelationOnset(n, onset, change))
        previous = onset
        logger.info("gelation onset m=%g N=%d: %s", m, n, onset)
    return rows
