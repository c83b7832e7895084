"""
Adaptive Dormand-Prince 5(4) integration of the truncated coagulation-fragmentation
system.

The state vector is [rho(1), ..., rho(N), gel_mass]. Steps use scipy's RK45 tableau
and are controlled by a PI controller on the componentwise embedded error estimate,
accepted states are projected onto nonnegative densities, and snapshots are
recorded by stride, by output interval, and at t_end.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.integrate import RK45
from scipy.integrate._ivp.rk import MIN_FACTOR, SAFETY, norm, rk_step

from kinetics.rhs_coag_frag import resolve_mode, rhs_arrays
from kinetics.size_distribution import (MomentVector, SimulationConfig, SizeDistribution,
                                        cluster_sizes, moments)
from utils.errors import NegativityFailure, NumericalFailure, StepSizeUnderflow

logger = logging.getLogger(__name__)

# Step-size controller, SAFETY and MIN_FACTOR as in scipy
MAX_FACTOR      = 5.0
PI_ALPHA        = 0.7 / 5
PI_BETA         = 0.4 / 5
ERROR_EXPONENT  = -1 / (RK45.error_estimator_order + 1)

UNDERFLOW_FRACTION  = 1e-14     # steps below this fraction of t_end abort the run
PROJECTION_WINDOW   = 10.0      # negatives down to -PROJECTION_WINDOW * abs_tol are projected


@dataclass
class Trajectory:
    times: np.ndarray
    snapshots: List[SizeDistribution]
    moments: List[MomentVector]
    gel_flux_series: np.ndarray
    projection_mass: float = 0.0         # total mass added by the positivity projection
    accepted_steps: int = 0
    rejected_steps: int = 0
    config: Optional[SimulationConfig] = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def final(self) -> SizeDistribution:
        return self.snapshots[-1]

    def gel_mass_series(self) -> np.ndarray:
        return np.array([s.gel_mass for s in self.snapshots])

    def moment_series(self, name: str) -> np.ndarray:
        if name not in ("m0", "m1", "m2"):
            raise ValueError(f"unknown moment '{name}', expected m0, m1 or m2")
        return np.array([getattr(m, name) for m in self.moments])

    def density_series(self, l: int) -> np.ndarray:
        """rho(l, t) across the snapshots."""
        return np.array([s.density(l) for s in self.snapshots])

    def mass_defect(self) -> np.ndarray:
        """|m1(t) + gel(t) - m1(0)| per output time."""
        if len(self) == 0:
            return np.zeros(0)
        total = self.moment_series("m1") + self.gel_mass_series()
        return np.abs(total - total[0])


def absolute_tolerance(abs_tol: float, n: int) -> np.ndarray:
    """
    Per-component absolute tolerance of the state [rho(1..N), gel_mass].

    Size j enters the gel closure through pairs (k, j) with k + j > N at a rate
    of order j^2 rho(j), so rho(j) is held to abs_tol / j^2.
    """
    sizes = cluster_sizes(n)
    return np.append(abs_tol / sizes**2, abs_tol)


def _error_norm(err: np.ndarray, y: np.ndarray, y_new: np.ndarray, atol: np.ndarray, rel_tol: float) -> float:
    """Componentwise max norm; every component stays within its own tolerance."""
    scale = atol + rel_tol * np.maximum(np.abs(y), np.abs(y_new))
    return float(np.max(np.abs(err) / scale))


class RK45Integrator:
    """
    One instance per run. The right-hand side mode is resolved once from the
    truncation so every stage uses the same convolution path.
    """

    def __init__(self, cfg: SimulationConfig):
        self.cfg   = cfg
        self.mode  = resolve_mode(cfg.convolution_mode, cfg.truncation_n)
        self.sizes = cluster_sizes(cfg.truncation_n)
        self.atol  = absolute_tolerance(cfg.abs_tol, cfg.truncation_n)

        self.projection_mass = 0.0
        self.accepted_steps  = 0
        self.rejected_steps  = 0

    def fun(self, t: float, y: np.ndarray) -> np.ndarray:
        d, gel_flux = rhs_arrays(y[:-1], self.mode, self.cfg.workers)
        return np.append(d, gel_flux)

    def initial_step(self, y0: np.ndarray, f0: np.ndarray) -> float:
        """Scaled RMS-norm starting step for a fifth-order method."""
        scale = self.atol + self.cfg.rel_tol * np.abs(y0)
        d0 = norm(y0 / scale)
        d1 = norm(f0 / scale)
        h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1

        f1 = self.fun(h0, y0 + h0 * f0)
        d2 = norm((f1 - f0) / scale) / h0

        if max(d1, d2) <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** (1 / (RK45.order + 1))
        return min(100 * h0, h1, self.cfg.t_end)

    def attempt(self, t: float, y: np.ndarray, f: np.ndarray, h: float):
        """One Dormand-Prince step. Returns (y_new, f_new, err)."""
        K = np.empty((RK45.n_stages + 1, y.size))
        y_new, f_new = rk_step(self.fun, t, y, f, h, RK45.A, RK45.B, RK45.C, K)
        err = h * (K.T @ RK45.E)
        return y_new, f_new, err

    def project(self, y_new: np.ndarray, t: float) -> bool:
        """Clip small negative densities in place; returns True when anything moved."""
        densities = y_new[:-1]
        negative  = densities < 0.0
        if not np.any(negative):
            return False

        worst = float(densities.min())
        if worst < -PROJECTION_WINDOW * self.cfg.abs_tol:
            size = int(np.argmin(densities)) + 1
            raise NegativityFailure(
                    f"integrate: rho({size}) = {worst:.3e} at t = {t:.6g} is below the projection window "
                    f"-{PROJECTION_WINDOW:g} * abs_tol"
            )

        added = float(np.dot(self.sizes[negative], -densities[negative]))
        densities[negative] = 0.0
        self.projection_mass += added
        logger.debug("projected %d negative densities at t=%.6g, mass added %.3e",
                     int(negative.sum()), t, added)
        return True

    def run(self, rho0: SizeDistribution) -> Trajectory:
        cfg = self.cfg
        if rho0.truncation_n != cfg.truncation_n:
            raise ValueError(f"initial data has N = {rho0.truncation_n}, config expects {cfg.truncation_n}")

        t     = 0.0
        y     = np.append(rho0.densities, rho0.gel_mass)
        f     = self.fun(t, y)
        h     = self.initial_step(y, f)
        floor = UNDERFLOW_FRACTION * cfg.t_end

        times, snaps, fluxes = [0.0], [rho0], [float(f[-1])]
        err_prev   = 1e-4
        rejected   = False
        next_mark  = 1                       # index of the next output_dt multiple

        while t < cfg.t_end:
            if self.accepted_steps >= cfg.max_steps:
                raise NumericalFailure(f"integrate: step budget of {cfg.max_steps} exhausted at t = {t:.6g}")
            if h < floor:
                raise StepSizeUnderflow(f"integrate: step {h:.3e} below {floor:.3e} at t = {t:.6g}")

            target = cfg.t_end
            if cfg.output_dt is not None:
                mark = next_mark * cfg.output_dt
                if mark < cfg.t_end * (1 - 1e-12):
                    target = mark

            step    = h
            landing = t + step >= target - 1e-3 * step
            if landing:
                step = target - t

            y_new, f_new, err = self.attempt(t, y, f, step)
            err_norm = _error_norm(err, y, y_new, self.atol, cfg.rel_tol)

            if not np.isfinite(err_norm) or err_norm > 1.0:
                self.rejected_steps += 1
                rejected = True
                if not np.isfinite(err_norm):
                    h = step * MIN_FACTOR
                else:
                    h = step * max(MIN_FACTOR, SAFETY * err_norm ** ERROR_EXPONENT)
                continue

            # accepted
            t = target if landing else t + step
            if self.project(y_new, t):
                f_new = self.fun(t, y_new)
            y_new[-1] = max(y_new[-1], y[-1])     # gel accumulator never decreases
            y, f = y_new, f_new
            self.accepted_steps += 1

            if err_norm == 0.0:
                factor = MAX_FACTOR
            else:
                factor = SAFETY * err_norm ** (-PI_ALPHA) * err_prev ** PI_BETA
                factor = min(MAX_FACTOR, max(MIN_FACTOR, factor))
            if rejected:
                factor = min(1.0, factor)
            err_prev = max(err_norm, 1e-4)
            rejected = False
            # a shortened landing step says little about growth
            h = h * min(factor, 1.0) if landing else step * factor

            on_mark = landing and target < cfg.t_end
            if on_mark:
                next_mark += 1
            by_stride = cfg.output_stride > 0 and self.accepted_steps % cfg.output_stride == 0
            if on_mark or by_stride or t >= cfg.t_end:
                times.append(t)
                snaps.append(SizeDistribution(y[:-1], y[-1]))
                fluxes.append(float(f[-1]))

        logger.info("integrate: t_end=%g reached, %d accepted, %d rejected steps, projection mass %.3e",
                    cfg.t_end, self.accepted_steps, self.rejected_steps, self.projection_mass)

        return Trajectory(
                times=np.array(times),
                snapshots=snaps,
                moments=[moments(s) for s in snaps],
                gel_flux_series=np.array(fluxes),
                projection_mass=self.projection_mass,
                accepted_steps=self.accepted_steps,
                rejected_steps=self.rejected_steps,
                config=cfg,
        )


def integrate(rho0: SizeDistribution, cfg: SimulationConfig) -> Trajectory:
    return RK45Integrator(cfg).run(rho0)


def detect_gelation(traj: Trajectory, threshold: float = 0.01) -> Optional[float]:
    """First output time where gel_mass / m1(0) reaches the threshold, or None."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    if len(traj) == 0:
        return None

    initial_mass = traj.moments[0].m1 + traj.snapshots[0].gel_mass
    if initial_mass <= 0.0:
        return None

    fraction = traj.gel_mass_series() / initial_mass
    hits     = np.nonzero(fraction >= threshold)[0]
    if hits.size == 0:
        return None

    onset = float(traj.times[hits[0]])
    logger.warning("gelation onset at t=%.6g (gel fraction %.3g >= %.3g)", onset, fraction[hits[0]], threshold)
    return onset
