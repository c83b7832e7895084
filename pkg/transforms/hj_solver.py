"""
Monotone explicit finite-difference solvers for the Hamilton-Jacobi equations
satisfied by the transforms.

z-form, on z in [0, 1 - dz]:
    G_t + 1/2 (zG_z + m)(zG_z + m + 1) + (1 + z) / (2 (1 - z)) G - m = 0

x-form with cutoff theta_n(x) = max(1/n, e^x - 1) and optional viscosity:
    F_t + 1/2 (F_x - m)(F_x - m - 1) + F / 2 + F / theta_n - m = eps a(x) F_xx,  F(0) = 0

Both are stepped with forward Euler and one-sided slopes taken against the
characteristic direction, under a step bound that keeps every update
nondecreasing in every nodal value.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, List, Literal, Optional, Sequence

import numpy as np

from transforms.transform_bernstein import TransformGrid
from utils.errors import CFLViolation, SchemeError

logger = logging.getLogger(__name__)

BAND_DRIFT_TOL = 1e-6       # excursions past the constraint band beyond this are flagged
CFL_SLACK      = 1e-12      # relative slack when comparing dt with its bound
DEFAULT_CUTOFF = 10_000
X_MAX          = 15.0


class ViscosityCoefficient:
    """
    a(x) = x on [0, 1], 2 on [3, inf), and on (1, 3) with s = x - 1

        a = 1 + s - s**3 / 4 + s**4 / 16,  a' = (s - 2)**2 (s + 1) / 4,  a'' = 3 s (s - 2) / 4

    which matches value, slope and curvature at both joints.
    """

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        s = x - 1.0
        middle = 1.0 + s - s ** 3 / 4.0 + s ** 4 / 16.0
        return np.where(x <= 1.0, x, np.where(x >= 3.0, 2.0, middle))

    def derivative(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        s = x - 1.0
        middle = 0.25 * (s - 2.0) ** 2 * (s + 1.0)
        return np.where(x <= 1.0, 1.0, np.where(x >= 3.0, 0.0, middle))

    def second_derivative(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        s = x - 1.0
        middle = 0.75 * s * (s - 2.0)
        return np.where((x <= 1.0) | (x >= 3.0), 0.0, middle)

    def verified(self, samples: int = 20_001, x_upper: float = 4.0) -> bool:
        """Nondecreasing, concave and C^2 across the joints on a fine grid."""
        x  = np.linspace(0.0, x_upper, samples)
        a  = self(x)
        ok = bool(np.all(np.diff(a) >= -1e-15) and np.all(self.derivative(x) >= 0.0)
                  and np.all(self.second_derivative(x) <= 0.0))
        for joint in (1.0, 3.0):
            left, right = joint - 1e-9, joint + 1e-9
            for fn in (self, self.derivative, self.second_derivative):
                ok &= bool(abs(float(fn(left)) - float(fn(right))) < 1e-6)
        return ok


VISCOSITY_A = ViscosityCoefficient()
if not VISCOSITY_A.verified():
    raise RuntimeError("viscosity coefficient a(x) is not smooth, nondecreasing and concave")


def theta_cutoff(x: np.ndarray, n: int) -> np.ndarray:
    return np.maximum(1.0 / n, np.expm1(x))


@dataclass(frozen=True)
class HJState:
    grid: TransformGrid
    time: float
    mass_m: float
    cutoff_n: int = DEFAULT_CUTOFF
    viscosity_eps: float = 0.0
    cfl: float = 0.9
    band_drift: float = 0.0          # worst excursion outside the band seen so far

    def __post_init__(self):
        if self.cutoff_n < 1:
            raise ValueError(f"cutoff_n must be a positive integer, got {self.cutoff_n}")
        if self.viscosity_eps < 0.0:
            raise ValueError(f"viscosity_eps must be nonnegative, got {self.viscosity_eps}")
        if not 0.0 < self.cfl < 1.0:
            raise ValueError(f"cfl must lie in (0, 1), got {self.cfl}")
        if len(self.grid) < 3:
            raise ValueError(f"HJ grids need at least 3 nodes, got {len(self.grid)}")
        if self.grid.uniform_spacing() is None or self.grid.nodes[0] != 0.0:
            raise ValueError("HJ grids must be uniform and start at 0")
        if self.grid.variable == "z" and self.grid.nodes[-1] >= 1.0:
            raise ValueError(f"z grids stop short of 1, got last node {self.grid.nodes[-1]}")

    @classmethod
    def initial(cls, grid: TransformGrid, mass_m: Optional[float] = None, **params) -> "HJState":
        """Start a run; initial data must sit inside the constraint band."""
        m = grid.mass_m if mass_m is None else mass_m
        start = grid if m == grid.mass_m else TransformGrid(grid.variable, grid.nodes, grid.values, m)
        drift = start.band_violation()
        if drift > BAND_DRIFT_TOL:
            raise ValueError(f"initial data leaves the constraint band by {drift:.3e}")
        return cls(grid=start, time=0.0, mass_m=m, **params)

    @property
    def spacing(self) -> float:
        return float(self.grid.nodes[1] - self.grid.nodes[0])

    @property
    def values(self) -> np.ndarray:
        return self.grid.values

    def advanced(self, values: np.ndarray, dt: float) -> "HJState":
        grid  = self.grid.with_values(values)
        drift = grid.band_violation()
        if drift > BAND_DRIFT_TOL and drift > self.band_drift:
            logger.warning("band drift %.3e at t=%.6g (%s-form)", drift, self.time + dt, grid.variable)
        return replace(self, grid=grid, time=self.time + dt, band_drift=max(self.band_drift, drift))


# z-form

def _singular_coefficient(z: np.ndarray) -> np.ndarray:
    return (1.0 + z) / (2.0 * (1.0 - z))


def _z_slopes(state: HJState) -> np.ndarray:
    """p = z D^- G on interior nodes 1..end."""
    z, g = state.grid.nodes, state.values
    return z[1:] * np.diff(g) / state.spacing


def max_stable_dt_G(state: HJState) -> float:
    if state.grid.variable != "z":
        raise ValueError("max_stable_dt_G needs a z-form state")
    z     = state.grid.nodes[1:]
    speed = z * (_z_slopes(state) + state.mass_m + 0.5)
    rate  = np.max(speed / state.spacing + _singular_coefficient(z))
    return float(state.cfl / max(rate, 0.5))


def step_G(state: HJState, dt: float) -> HJState:
    if state.grid.variable != "z":
        raise ValueError("step_G needs a z-form state")
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")

    m = state.mass_m
    z = state.grid.nodes
    g = state.values
    p = _z_slopes(state)

    if np.any(p + m + 0.5 < 0.0):
        worst = int(np.argmin(p + m + 0.5)) + 1
        raise SchemeError(f"step_G: upwind speed changed sign at z = {z[worst]:.6g} (zG_z = {p[worst - 1]:.6g})")

    bound = max_stable_dt_G(state)
    if dt > bound * (1.0 + CFL_SLACK):
        raise CFLViolation(f"step_G: dt = {dt:.3e} exceeds the monotonicity bound {bound:.3e}")

    hamiltonian = 0.5 * (p + m) * (p + m + 1.0) + _singular_coefficient(z[1:]) * g[1:] - m

    new = np.empty_like(g)
    new[1:] = g[1:] - dt * hamiltonian
    rest    = m - m * m                          # z = 0 reduces to G_t = (m - m^2)/2 - G/2
    new[0]  = rest + (g[0] - rest) * np.exp(-0.5 * dt)
    return state.advanced(new, dt)


# x-form

def _x_slopes(state: HJState) -> np.ndarray:
    """Forward slopes at nodes 0..end; the ghost node past the edge copies the last value."""
    f = state.values
    return np.append(np.diff(f), 0.0) / state.spacing


def _x_rates(state: HJState) -> np.ndarray:
    x   = state.grid.nodes
    q   = _x_slopes(state)
    dx  = state.spacing
    eps = state.viscosity_eps
    return (np.abs(q - state.mass_m - 0.5) / dx + 0.5 + 1.0 / theta_cutoff(x, state.cutoff_n)
            + 2.0 * eps * VISCOSITY_A(x) / dx ** 2)


def max_stable_dt_F(state: HJState) -> float:
    if state.grid.variable != "x":
        raise ValueError("max_stable_dt_F needs an x-form state")
    bound = state.cfl / float(np.max(_x_rates(state)[1:]))
    if state.viscosity_eps > 0.0:
        parabolic = 0.5 * state.spacing ** 2 / (state.viscosity_eps * float(np.max(VISCOSITY_A(state.grid.nodes))))
        bound = min(bound, parabolic)
    return bound


def step_F(state: HJState, dt: float) -> HJState:
    if state.grid.variable != "x":
        raise ValueError("step_F needs an x-form state")
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")

    m  = state.mass_m
    x  = state.grid.nodes
    f  = state.values
    dx = state.spacing
    q  = _x_slopes(state)

    if np.any(q[1:] - m - 0.5 > 0.0):
        worst = int(np.argmax(q[1:])) + 1
        raise SchemeError(f"step_F: slope {q[worst]:.6g} at x = {x[worst]:.6g} exceeds m + 1/2, upwind direction lost")

    bound = max_stable_dt_F(state)
    if dt > bound * (1.0 + CFL_SLACK):
        raise CFLViolation(f"step_F: dt = {dt:.3e} exceeds the monotonicity bound {bound:.3e}")

    padded    = np.append(f, f[-1])
    curvature = (padded[2:] - 2.0 * f[1:] + f[:-1]) / dx ** 2
    hamiltonian = (0.5 * (q[1:] - m) * (q[1:] - m - 1.0) + 0.5 * f[1:]
                   + f[1:] / theta_cutoff(x[1:], state.cutoff_n) - m)

    new = np.empty_like(f)
    new[0]  = 0.0
    new[1:] = f[1:] - dt * hamiltonian + dt * state.viscosity_eps * VISCOSITY_A(x[1:]) * curvature
    return state.advanced(new, dt)


# evolution

@dataclass
class HJEvolution:
    final: HJState
    times: List[float] = field(default_factory=list)
    snapshots: List[HJState] = field(default_factory=list)
    steps: int = 0

    @property
    def max_band_drift(self) -> float:
        return self.final.band_drift


def _evolve(state: HJState, t_final: float, stepper, bound_fn,
            snapshot_times: Optional[Sequence[float]] = None, max_steps: int = 5_000_000) -> HJEvolution:
    if t_final < state.time:
        raise ValueError(f"t_final {t_final} lies before the state time {state.time}")

    requested = np.zeros(0) if snapshot_times is None else np.asarray(snapshot_times, dtype=float).ravel()
    marks = sorted({float(t) for t in requested if state.time < t < t_final}) + [t_final]
    run   = HJEvolution(final=state, times=[state.time], snapshots=[state])

    for mark in marks:
        while state.time < mark:
            if run.steps >= max_steps:
                raise SchemeError(f"evolve: step budget of {max_steps} exhausted at t = {state.time:.6g}")
            dt = bound_fn(state)
            if state.time + dt >= mark - 1e-12 * max(mark, 1.0):
                dt = mark - state.time
            state = stepper(state, dt)
            run.steps += 1
        state = replace(state, time=mark)
        run.times.append(mark)
        run.snapshots.append(state)

    run.final = state
    logger.debug("evolved %s-form to t=%g in %d steps, band drift %.3e",
                 state.grid.variable, t_final, run.steps, state.band_drift)
    return run


def evolve_G(state: HJState, t_final: float, snapshot_times: Optional[Sequence[float]] = None) -> HJEvolution:
    return _evolve(state, t_final, step_G, max_stable_dt_G, snapshot_times)


def evolve_F(state: HJState, t_final: float, snapshot_times: Optional[Sequence[float]] = None) -> HJEvolution:
    return _evolve(state, t_final, step_F, max_stable_dt_F, snapshot_times)


# diagnostics

def stationary_residual_G(grid: TransformGrid, m: float) -> float:
    """Sup over interior nodes of the stationary z-form equation with centered slopes."""
    if grid.variable != "z":
        raise ValueError("stationary_residual_G needs a z-form grid")
    if len(grid) < 3:
        raise ValueError("stationary_residual_G needs at least 3 nodes")
    z     = grid.nodes
    slope = np.gradient(grid.values, z)[1:-1]
    p     = z[1:-1] * slope
    res   = 0.5 * (p + m) * (p + m + 1.0) + _singular_coefficient(z[1:-1]) * grid.values[1:-1] - m
    return float(np.max(np.abs(res)))


@dataclass(frozen=True)
class SlopeDiagnostics:
    min_fx: float
    max_fx: float
    max_fxx: float


def slope_diagnostics(grid: TransformGrid) -> SlopeDiagnostics:
    """Discrete F_x (forward) and F_xx (centered) extremes on an x-form grid."""
    if grid.variable != "x":
        raise ValueError("slope_diagnostics needs an x-form grid")
    dx  = float(grid.nodes[1] - grid.nodes[0])
    fx  = np.diff(grid.values) / dx
    fxx = np.diff(grid.values, 2) / dx ** 2
    return SlopeDiagnostics(float(fx.min()), float(fx.max()), float(fxx.max()))


@dataclass(frozen=True)
class BlowupReport:
    sigma: float
    delta: float                      # predicted bound on d(phi)/dt
    predicted_exit: float             # 1 + phi(0) / |delta|
    times: np.ndarray
    phi: np.ndarray
    maximiser: np.ndarray             # x where the max is attained
    collapse_time: Optional[float]    # first time the maximiser reaches x = 0
    observed_rate: Optional[float]    # least-squares slope of phi before collapse


def blowup_functional(states: Sequence[HJState], sigma: Optional[float] = None) -> BlowupReport:
    """
    phi(t) = max_x (F - sigma x) along x-form snapshots of an m > 1 run, with the
    default sigma = (m - 1) / 2.
    """
    if not states:
        raise ValueError("blowup_functional needs at least one snapshot")
    m = states[0].mass_m
    if not m > 1.0:
        raise ValueError(f"blowup_functional applies to m > 1, got {m}")
    sigma = 0.5 * (m - 1.0) if sigma is None else sigma
    if not 0.0 < sigma < m - 1.0:
        raise ValueError(f"sigma must lie in (0, m - 1), got {sigma}")

    times, phi, where = [], [], []
    for s in states:
        if s.grid.variable != "x":
            raise ValueError("blowup_functional needs x-form snapshots")
        shifted = s.values - sigma * s.grid.nodes
        idx = int(np.argmax(shifted))
        times.append(s.time)
        phi.append(float(shifted[idx]))
        where.append(float(s.grid.nodes[idx]))

    times, phi, where = np.array(times), np.array(phi), np.array(where)
    delta = -0.5 * (sigma - m) * (sigma - (m - 1.0))

    collapsed = np.nonzero(where == 0.0)[0]
    collapse  = float(times[collapsed[0]]) if collapsed.size else None

    before = times < collapse if collapse is not None else np.ones_like(times, dtype=bool)
    rate   = float(np.polyfit(times[before], phi[before], 1)[0]) if np.count_nonzero(before) >= 2 else None

    report = BlowupReport(sigma, delta, 1.0 + phi[0] / abs(delta), times, phi, where, collapse, rate)
    logger.info("blow-up functional m=%g sigma=%g: phi(0)=%.4g, delta=%.4g, predicted exit %.4g, collapse %s",
                m, sigma, phi[0], delta, report.predicted_exit, collapse)
    return report


# refinement study

@dataclass(frozen=True)
class HJProblem:
    """A z-form refinement problem; kind 'transport' is G_t + (m + 1/2) z G_z = 0."""
    mass_m: float
    initial: Callable[[np.ndarray], np.ndarray]
    t_final: float
    kind: Literal["hj", "transport"] = "hj"
    exact: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    compare_upper: float = 0.9
    cfl: float = 0.9


@dataclass(frozen=True)
class OrderEstimate:
    grid_sizes: List[float]
    errors: List[float]
    order: Optional[float]
    degenerate: bool


def _step_transport(state: HJState, dt: float) -> HJState:
    speed = state.mass_m + 0.5
    z, g  = state.grid.nodes, state.values
    new   = g.copy()
    new[1:] = g[1:] - dt * speed * z[1:] * np.diff(g) / state.spacing
    return replace(state, grid=state.grid.with_values(new), time=state.time + dt)   # no band for transport


def _transport_dt(state: HJState) -> float:
    return state.cfl * state.spacing / ((state.mass_m + 0.5) * state.grid.nodes[-1])


def _solve_problem(problem: HJProblem, dz: float) -> TransformGrid:
    nodes = dz * np.arange(int(round(1.0 / dz)))
    grid  = TransformGrid("z", nodes, problem.initial(nodes), problem.mass_m)
    state = HJState(grid=grid, time=0.0, mass_m=problem.mass_m, cfl=problem.cfl)
    if problem.kind == "transport":
        return _evolve(state, problem.t_final, _step_transport, _transport_dt).final.grid
    return evolve_G(state, problem.t_final).final.grid


def refine_and_estimate_order(problem: HJProblem, grid_sizes: Sequence[float]) -> OrderEstimate:
    """
    Observed order from three or more grids in geometric progression, compared on
    the coarsest nodes with z <= compare_upper. With an exact solution the errors
    are measured against it, otherwise successive differences are used.
    """
    sizes = sorted(grid_sizes, reverse=True)
    if len(sizes) < 3:
        raise ValueError(f"need at least 3 grid sizes, got {len(sizes)}")
    ratios = [sizes[i] / sizes[i + 1] for i in range(len(sizes) - 1)]
    ratio  = ratios[0]
    if any(abs(r - ratio) > 1e-9 * ratio for r in ratios) or abs(ratio - round(ratio)) > 1e-9 or ratio < 2:
        raise ValueError(f"grid sizes must shrink by a constant integer ratio, got {sizes}")
    ratio = round(ratio)

    coarse = sizes[0] * np.arange(int(round(1.0 / sizes[0])))
    coarse = coarse[coarse <= problem.compare_upper + 1e-12]

    samples = []
    for i, dz in enumerate(sizes):
        solved = _solve_problem(problem, dz)
        step   = ratio ** i
        samples.append(solved.values[: coarse.size * step: step])

    if problem.exact is not None:
        reference = problem.exact(coarse, problem.t_final)
        errors = [float(np.max(np.abs(s - reference))) for s in samples]
    else:
        errors = [float(np.max(np.abs(samples[i] - samples[i + 1]))) for i in range(len(samples) - 1)]

    scale      = max(float(np.max(np.abs(samples[-1]))), 1.0)
    degenerate = errors[-1] <= 1e-13 * scale or errors[-2] <= 1e-13 * scale
    order      = None if degenerate else float(np.log(errors[-2] / errors[-1]) / np.log(ratio))

    logger.info("refinement %s m=%g: errors %s, order %s", problem.kind, problem.mass_m,
                ", ".join(f"{e:.3e}" for e in errors), "degenerate" if degenerate else f"{order:.3f}")
    return OrderEstimate(list(sizes), errors, order, degenerate)
