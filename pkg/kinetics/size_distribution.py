"""
Domain types for truncated cluster-size distributions.

Every interface speaks in cluster size j >= 1. Arrays are stored 0-indexed, so
densities[j - 1] holds rho(j).
"""

import logging
from dataclasses import dataclass
from typing import Dict, Literal, Mapping, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)

ConvolutionMode = Literal["direct", "fft", "auto"]
InitialKind     = Literal["monodisperse", "geometric", "explicit"]

MASS_MATCH_RTOL = 1e-9   # truncated m1 must match the declared mass this closely


def cluster_sizes(n: int) -> np.ndarray:
    """Sizes 1..n as floats, aligned with the densities array."""
    return np.arange(1, n + 1, dtype=float)


@dataclass(frozen=True)
class SizeDistribution:
    densities: np.ndarray          # rho(j) for j = 1..N, stored at index j - 1
    gel_mass: float = 0.0          # first-moment mass routed past size N

    def __post_init__(self):
        densities = np.array(self.densities, dtype=float)   # private copy

        if densities.ndim != 1:
            raise ValueError(f"densities must be one-dimensional, got shape {densities.shape}")
        if densities.size < 2:
            raise ValueError(f"truncation_n must be at least 2, got {densities.size}")
        if not np.all(np.isfinite(densities)):
            raise ValueError("densities must be finite")
        if np.any(densities < 0.0):
            worst = int(np.argmin(densities)) + 1
            raise ValueError(f"densities must be nonnegative, rho({worst}) = {densities[worst - 1]}")
        if not np.isfinite(self.gel_mass) or self.gel_mass < 0.0:
            raise ValueError(f"gel_mass must be a nonnegative real, got {self.gel_mass}")

        densities.setflags(write=False)
        object.__setattr__(self, "densities", densities)
        object.__setattr__(self, "gel_mass", float(self.gel_mass))

    @property
    def truncation_n(self) -> int:
        return int(self.densities.size)

    @property
    def sizes(self) -> np.ndarray:
        return cluster_sizes(self.truncation_n)

    def density(self, j: int) -> float:
        """rho(j) for 1 <= j <= N, zero beyond the truncation."""
        if j < 1:
            raise ValueError(f"cluster sizes start at 1, got {j}")
        if j > self.truncation_n:
            return 0.0
        return float(self.densities[j - 1])

    @classmethod
    def zeros(cls, n: int) -> "SizeDistribution":
        return cls(np.zeros(n))

    @classmethod
    def from_sizes(cls, values: Mapping[int, float], n: int, gel_mass: float = 0.0) -> "SizeDistribution":
        """Build from a {size: density} mapping, e.g. {1: 0.5, 3: 0.25}."""
        densities = np.zeros(n)
        for size, value in values.items():
            if not 1 <= size <= n:
                raise ValueError(f"size {size} outside 1..{n}")
            densities[size - 1] = value
        return cls(densities, gel_mass)


@dataclass(frozen=True)
class MomentVector:
    m0: float
    m1: float
    m2: float


def moment(rho: SizeDistribution, order: int) -> float:
    """Finite-size moment sum_j j**order rho(j); the gel accumulator is not included."""
    if order not in (0, 1, 2, 3):
        raise ValueError(f"moment order must be 0, 1, 2 or 3, got {order}")
    return float(np.dot(rho.sizes ** order, rho.densities))


def moments(rho: SizeDistribution) -> MomentVector:
    return MomentVector(m0=moment(rho, 0), m1=moment(rho, 1), m2=moment(rho, 2))


@dataclass(frozen=True)
class InitialDataSpec:
    kind: InitialKind
    declared_mass: float
    size_j0: int = 1                         # monodisperse: the occupied size
    ratio_q: Optional[float] = None          # geometric: rho(j) = c q**j
    values: Tuple[float, ...] = ()           # explicit: rho(1), rho(2), ...

    def __post_init__(self):
        if self.kind not in ("monodisperse", "geometric", "explicit"):
            raise ValueError(f"unknown initial data kind '{self.kind}'")
        if not np.isfinite(self.declared_mass) or self.declared_mass < 0.0:
            raise ValueError(f"declared_mass must be a nonnegative real, got {self.declared_mass}")
        if self.kind == "monodisperse" and self.size_j0 < 1:
            raise ValueError(f"monodisperse size must be >= 1, got {self.size_j0}")
        if self.kind == "geometric":
            if self.ratio_q is None or not 0.0 < self.ratio_q < 1.0:
                raise ValueError(f"geometric ratio q must lie in (0, 1), got {self.ratio_q}")
        if self.kind == "explicit":
            if len(self.values) == 0:
                raise ValueError("explicit initial data needs at least one value")
            if any(v < 0.0 for v in self.values):
                raise ValueError(f"explicit initial data must be nonnegative, got {list(self.values)}")

    @classmethod
    def monodisperse(cls, size_j0: int, density: float) -> "InitialDataSpec":
        return cls(kind="monodisperse", declared_mass=size_j0 * density, size_j0=size_j0)

    @classmethod
    def geometric(cls, ratio_q: float, mass: float) -> "InitialDataSpec":
        return cls(kind="geometric", declared_mass=mass, ratio_q=ratio_q)

    @classmethod
    def explicit(cls, values) -> "InitialDataSpec":
        values = tuple(float(v) for v in values)
        mass = sum(j * v for j, v in enumerate(values, start=1))
        return cls(kind="explicit", declared_mass=mass, values=values)

    def to_dict(self) -> Dict[str, object]:
        return {
                "kind"         : self.kind,
                "declared_mass": self.declared_mass,
                "size_j0"      : self.size_j0,
                "ratio_q"      : self.ratio_q,
                "values"       : list(self.values),
        }


def parse_initial_spec(text: str, mass: float) -> InitialDataSpec:
    """
    Parse the --init flag.

    monodisperse:<j0>          all mass at size j0
    geometric:<q>              rho(j) proportional to q**j
    explicit:<v1>,<v2>,...     rho(1), rho(2), ... (mass is implied by the values)
    """
    kind, _, params = text.partition(":")
    kind = kind.strip().lower()

    try:
        if kind == "monodisperse":
            size_j0 = int(params) if params else 1
            return InitialDataSpec(kind="monodisperse", declared_mass=mass, size_j0=size_j0)
        if kind == "geometric":
            return InitialDataSpec.geometric(float(params), mass)
        if kind == "explicit":
            return InitialDataSpec.explicit(float(v) for v in params.split(",") if v.strip())
    except ValueError as e:
        raise ValueError(f"Invalid initial data '{text}': {e}") from e

    raise ValueError(f"Invalid initial data kind '{kind}', expected monodisperse, geometric or explicit")


def build_initial(spec: InitialDataSpec, n: int) -> SizeDistribution:
    """Realise the initial data on sizes 1..n with m1 equal to the declared mass."""
    if n < 2:
        raise ValueError(f"truncation_n must be at least 2, got {n}")

    densities = np.zeros(n)
    sizes     = cluster_sizes(n)

    if spec.kind == "monodisperse":
        if spec.size_j0 > n:
            raise ValueError(f"monodisperse size {spec.size_j0} exceeds truncation {n}")
        densities[spec.size_j0 - 1] = spec.declared_mass / spec.size_j0

    elif spec.kind == "geometric":
        q = spec.ratio_q
        c = spec.declared_mass * (1.0 - q) ** 2 / q         # sum_j j q**j = q / (1 - q)**2
        densities = c * np.power(q, sizes)

    else:
        if len(spec.values) > n:
            raise ValueError(f"explicit initial data has {len(spec.values)} sizes, truncation is {n}")
        densities[: len(spec.values)] = spec.values

    truncated_mass = float(np.dot(sizes, densities))
    target         = spec.declared_mass

    if target == 0.0:
        if truncated_mass != 0.0:
            raise ValueError(f"declared mass 0 but truncated mass is {truncated_mass}")
        return SizeDistribution(densities)

    deviation = abs(truncated_mass - target) / target
    if deviation > MASS_MATCH_RTOL:
        raise ValueError(
                f"truncated mass {truncated_mass:.12g} deviates from declared mass {target:.12g} "
                f"by {deviation:.3g} relative; increase the truncation (n = {n})"
        )

    # Absorb the sub-tolerance truncation tail so m1 matches to rounding
    densities *= target / truncated_mass
    logger.debug("initial data %s on n=%d, tail correction %.3g", spec.kind, n, deviation)

    return SizeDistribution(densities)


@dataclass(frozen=True)
class SimulationConfig:
    truncation_n: int                       # N, largest tracked cluster size
    t_end: float
    output_stride: int = 10                 # snapshot every k accepted steps, 0 disables
    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    convolution_mode: ConvolutionMode = "auto"
    output_dt: Optional[float] = None       # extra snapshots at multiples of output_dt
    workers: Optional[int] = None           # threads handed to scipy.fft
    max_steps: int = 10_000_000

    def __post_init__(self):
        if self.truncation_n < 2:
            raise ValueError(f"truncation_n must be at least 2, got {self.truncation_n}")
        if not self.t_end > 0.0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if self.output_stride < 0:
            raise ValueError(f"output_stride must be a nonnegative integer, got {self.output_stride}")
        if self.output_stride == 0 and self.output_dt is None:
            raise ValueError("output_stride 0 needs output_dt to place snapshots")
        if not self.abs_tol > 0.0 or not self.rel_tol > 0.0:
            raise ValueError(f"tolerances must be positive, got abs_tol={self.abs_tol}, rel_tol={self.rel_tol}")
        if self.convolution_mode not in ("direct", "fft", "auto"):
            raise ValueError(f"convolution_mode must be direct, fft or auto, got '{self.convolution_mode}'")
        if self.output_dt is not None and not self.output_dt > 0.0:
            raise ValueError(f"output_dt must be positive when set, got {self.output_dt}")
        if self.workers is not None and self.workers < 1:
            raise ValueError(f"workers must be a positive integer, got {self.workers}")
