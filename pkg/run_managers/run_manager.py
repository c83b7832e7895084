import logging
import os
import statistics
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from analysis.analysis_checks import weak_form_residual
from analysis.verify_suite import VerifyReport, run_suite
from kinetics.equilibrium_recursion import (EquilibriumValidation, EquilibriumVerdict,
                                            coefficient_identity_residual, existence_verdict, validate)
from kinetics.integrator_rk45 import Trajectory, detect_gelation, integrate
from kinetics.rhs_coag_frag import rhs_arrays
from kinetics.size_distribution import SizeDistribution, build_initial
from run_database.config_loader_run import RunConfig
from transforms.hj_solver import (BlowupReport, HJEvolution, HJState, blowup_functional, evolve_F,
                                  evolve_G)
from transforms.transform_bernstein import transform_F, transform_G, uniform_x_grid, uniform_z_grid
from utils import output_writer
from utils.errors import BenchmarkCrossCheckError

logger = logging.getLogger(__name__)

CROSS_CHECK_RTOL = 1e-10     # direct and FFT right-hand sides, relative to max |d|


@dataclass
class SimulationResult:
    trajectory: Trajectory
    gelation_onset: Optional[float]
    files: List[str] = field(default_factory=list)


@dataclass
class EquilibriumResult:
    verdict: EquilibriumVerdict
    validation: Optional[EquilibriumValidation]
    identity_residual: float
    files: List[str] = field(default_factory=list)


@dataclass
class HJResult:
    evolution: HJEvolution
    blowup: Optional[BlowupReport]
    files: List[str] = field(default_factory=list)


@dataclass(frozen=True)
class BenchRow:
    size: int
    mode: str
    median: float            # seconds per rhs evaluation
    spread: float            # max - min over repetitions
    minimum: float
    maximum: float


@dataclass
class BenchReport:
    rows: List[BenchRow]
    cross_check: Dict[int, float]
    repetitions: int
    crossover: Optional[int]
    files: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, object]:
        return {
                "repetitions" : self.repetitions,
                "cross_check" : {str(k): v for k, v in self.cross_check.items()},
                "crossover"   : self.crossover,
                "rows"        : [row.__dict__ for row in self.rows],
        }


class RunManager:
    """
    Runs one command of a resolved RunConfig and writes its artifacts.
    One instance per process, obtained through get_instance().
    """
    _instance = None

    def __init__(self, config: RunConfig):
        self.config   = config
        self.out_dir  = config.output.out_dir       # every artifact lands here
        self.threads  = config.output.threads       # scipy.fft workers

    @classmethod
    def get_instance(cls, config: Optional[RunConfig] = None) -> "RunManager":
        """Singleton access; passing a different config rebinds the instance."""
        if cls._instance is None or (config is not None and cls._instance.config is not config):
            if config is None:
                raise ValueError("RunManager needs a RunConfig on first use")
            cls._instance = cls(config)
        return cls._instance

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def write_metadata(self, extra: Optional[Dict[str, object]] = None) -> str:
        return output_writer.write_metadata(self.out_dir, self.config.command, self.config.to_dict(),
                                            self.threads, extra)

    def run(self):
        """Dispatch on config.command."""
        command = self.config.command
        os.makedirs(self.out_dir, exist_ok=True)
        logger.info("running %s into %s", command, self.out_dir)
        handler = {
                "simulate"    : self.simulate,
                "equilibrium" : self.equilibrium,
                "hj"          : self.hj,
                "verify"      : self.verify,
                "bench"       : self.bench,
        }[command]
        return handler()

    def simulate(self) -> SimulationResult:
        block = self.config.simulation
        rho0  = build_initial(block.initial_spec(), block.n)
        traj  = integrate(rho0, block.simulation_config(self.threads))
        onset = detect_gelation(traj, block.gel_threshold)

        files = [
                output_writer.write_trajectory_csv(traj, self.path("trajectory.csv"), block.k_export),
                output_writer.write_moments_csv(traj, self.path("moments.csv")),
        ]
        if len(traj) >= 3:
            # g = 1 tracks the cluster count, g = j the finite mass
            files.append(output_writer.write_series_csv(self.path("weak_form.csv"), {
                    "t"     : traj.times,
                    "count" : weak_form_residual(traj, 1.0, block.mode),
                    "mass"  : weak_form_residual(traj, lambda j: j, block.mode),
            }))
        files.append(self.write_metadata({
                "accepted_steps"  : traj.accepted_steps,
                "rejected_steps"  : traj.rejected_steps,
                "projection_mass" : traj.projection_mass,
                "gelation_onset"  : onset,
        }))
        return SimulationResult(traj, onset, files)

    def equilibrium(self) -> EquilibriumResult:
        block   = self.config.equilibrium
        verdict = existence_verdict(block.mass, block.length, block.method)

        validation = None
        if verdict.kind == "exists_unique" and block.length >= 2:
            validation = validate(verdict.table, workers=self.threads)
        identity = float(np.max(np.abs(coefficient_identity_residual(verdict.table))))

        payload = verdict.to_dict()
        payload["identity_residual"] = identity
        payload["validation"] = validation.to_dict() if validation else None

        files = [
                output_writer.write_json(self.path("verdict.json"), payload),
                output_writer.write_equilibrium_csv(verdict.table, self.path("equilibrium_table.csv")),
                self.write_metadata(),
        ]
        return EquilibriumResult(verdict, validation, identity, files)

    def hj(self) -> HJResult:
        block = self.config.hj
        rho0  = build_initial(block.initial_spec(), block.n)
        times = block.snapshot_times()

        if block.form == "z":
            grid  = transform_G(rho0, uniform_z_grid(block.grid_dz))
            state = HJState.initial(grid, cfl=block.cfl)
            run   = evolve_G(state, block.t_final, times)
        else:
            grid  = transform_F(rho0, uniform_x_grid(block.grid_dz, block.x_max))
            state = HJState.initial(grid, cutoff_n=block.cutoff_n, viscosity_eps=block.eps, cfl=block.cfl)
            run   = evolve_F(state, block.t_final, times)

        blowup = None
        if block.form == "x" and state.mass_m > 1.0:
            blowup = blowup_functional(run.snapshots)

        summary = {
                "form"           : block.form,
                "mass_m"         : state.mass_m,
                "steps"          : run.steps,
                "max_band_drift" : run.max_band_drift,
                "times"          : run.times,
        }
        files = [
                output_writer.write_hj_snapshots_csv(run.snapshots, self.path("hj_snapshots.csv")),
                output_writer.write_json(self.path("hj_summary.json"), summary),
        ]
        if blowup is not None:
            files.append(output_writer.write_json(self.path("blowup.json"), blowup))
        files.append(self.write_metadata())
        return HJResult(run, blowup, files)

    def verify(self) -> VerifyReport:
        block  = self.config.verify
        report = run_suite(block.suite, block.quick)
        output_writer.write_json(self.path("verify_report.json"), report.to_dict())
        self.write_metadata({"passed": report.passed})
        if not report.passed:
            for check in report.failures:
                logger.error("check %s failed: %.6g against %.6g %s",
                             check.name, check.value, check.threshold, check.detail)
        return report

    def _bench_state(self, size: int, rng: np.random.Generator) -> np.ndarray:
        raw = rng.random(size) * np.exp(-np.arange(1, size + 1) / (0.25 * size))
        return raw / float(np.dot(np.arange(1, size + 1), raw))       # unit mass

    def bench(self) -> BenchReport:
        """Direct and FFT right-hand sides are cross-checked on every size before any timing."""
        block  = self.config.bench
        rng    = np.random.default_rng(block.seed)
        states = {size: self._bench_state(size, rng) for size in block.sizes}

        cross = {}
        for size, densities in states.items():
            direct, _ = rhs_arrays(densities, "direct", self.threads)
            fast, _   = rhs_arrays(densities, "fft", self.threads)
            scale     = max(float(np.max(np.abs(direct))), np.finfo(float).tiny)
            cross[size] = float(np.max(np.abs(fast - direct))) / scale
            if not cross[size] <= CROSS_CHECK_RTOL:
                raise BenchmarkCrossCheckError(
                        f"bench: direct and fft right-hand sides differ by {cross[size]:.3e} relative at "
                        f"N = {size}, timings withheld"
                )

        rows = []
        for size, densities in states.items():
            for mode in block.modes:
                samples = []
                for _ in range(block.repetitions):
                    started = time.perf_counter()
                    rhs_arrays(densities, mode, self.threads)
                    samples.append(time.perf_counter() - started)
                rows.append(BenchRow(size, mode, statistics.median(samples), max(samples) - min(samples),
                                     min(samples), max(samples)))
                logger.debug("bench N=%d %s: median %.3e s", size, mode, rows[-1].median)

        medians   = {(r.size, r.mode): r.median for r in rows}
        crossover = next((s for s in sorted(block.sizes)
                          if (s, "fft") in medians and (s, "direct") in medians
                          and medians[(s, "fft")] < medians[(s, "direct")]), None)

        report = BenchReport(rows, cross, block.repetitions, crossover)
        report.files = [
                output_writer.write_json(self.path("bench_report.json"), report.to_dict()),
                output_writer.write_csv(self.path("bench.csv"),
                                        ["size", "mode", "median", "spread", "min", "max"],
                                        ([r.size, r.mode, r.median, r.spread, r.minimum, r.maximum] for r in rows)),
                self.write_metadata(),
        ]
        return report
