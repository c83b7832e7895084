"""
Discrete Bernstein transform and its generating-function form.

    F(x) = sum_j (1 - exp(-j x)) rho(j)          x in [0, inf)
    G(z) = F(-log z) = sum_l (1 - z**l) rho(l)    z in [0, 1]

Only finite sizes enter; the gel accumulator is excluded so that G(0) = m0 and
-G'(1-) = m1 of the finite part.
"""

import logging
from dataclasses import dataclass, field
from math import comb, factorial
from typing import List, Literal, Optional

import numpy as np
from numpy.polynomial import Chebyshev, Polynomial

from kinetics.size_distribution import SizeDistribution, moment
from utils.errors import GridTooCoarse, IllConditioned

logger = logging.getLogger(__name__)

Variable = Literal["x", "z"]

COLLOCATION_SWITCH        = 8      # orders above this solve the collocation system
COLLOCATION_RTOL          = 1e-4   # largest admissible rounding amplification, relative to max |G|
COLLOCATION_OVERSAMPLING  = 2      # Chebyshev targets per unknown
NODE_MATCH_RTOL           = 1e-6   # relative to h when locating difference nodes
EPS                       = np.finfo(float).eps


@dataclass(frozen=True)
class TransformGrid:
    variable: Variable
    nodes: np.ndarray
    values: np.ndarray
    mass_m: float

    def __post_init__(self):
        if self.variable not in ("x", "z"):
            raise ValueError(f"variable must be 'x' or 'z', got '{self.variable}'")
        nodes  = np.asarray(self.nodes, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if nodes.ndim != 1 or nodes.shape != values.shape:
            raise ValueError(f"nodes and values must be 1-D of equal length, got {nodes.shape} and {values.shape}")
        if nodes.size > 1 and np.any(np.diff(nodes) <= 0.0):
            raise ValueError("nodes must be strictly increasing")
        if self.variable == "z" and nodes.size and (nodes[0] < 0.0 or nodes[-1] > 1.0):
            raise ValueError(f"z nodes must lie in [0, 1], got [{nodes[0]}, {nodes[-1]}]")
        if self.variable == "x" and nodes.size and nodes[0] < 0.0:
            raise ValueError(f"x nodes must be nonnegative, got {nodes[0]}")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return int(self.nodes.size)

    def with_values(self, values: np.ndarray) -> "TransformGrid":
        return TransformGrid(self.variable, self.nodes, values, self.mass_m)

    def restrict(self, upper: float) -> "TransformGrid":
        """Nodes <= upper only."""
        keep = self.nodes <= upper
        return TransformGrid(self.variable, self.nodes[keep], self.values[keep], self.mass_m)

    def uniform_spacing(self, rtol: float = 1e-9) -> Optional[float]:
        """Spacing of an equispaced grid, None otherwise."""
        if self.nodes.size < 2:
            return None
        steps   = np.diff(self.nodes)
        spacing = float(steps.mean())
        if np.max(np.abs(steps - spacing)) > rtol * max(spacing, 1.0) + 1e-12:
            return None
        return spacing

    def upper_band(self) -> np.ndarray:
        if self.variable == "z":
            return self.mass_m * (1.0 - self.nodes)
        return -self.mass_m * np.expm1(-self.nodes)

    def band_violation(self) -> float:
        """Largest excursion outside [0, upper_band]; zero inside the band."""
        if len(self) == 0:
            return 0.0
        below = np.max(-self.values)
        above = np.max(self.values - self.upper_band())
        return float(max(below, above, 0.0))


def uniform_z_grid(dz: float, upper: Optional[float] = None) -> np.ndarray:
    """0, dz, 2dz, ... up to 1 - dz (or upper)."""
    if not 0.0 < dz < 1.0:
        raise ValueError(f"dz must lie in (0, 1), got {dz}")
    count = int(round(1.0 / dz))
    nodes = dz * np.arange(count)
    if upper is not None:
        nodes = nodes[nodes <= upper + 1e-12]
    return nodes


def uniform_x_grid(dx: float, x_max: float = 15.0) -> np.ndarray:
    if not dx > 0.0 or not x_max > dx:
        raise ValueError(f"need 0 < dx < x_max, got dx={dx}, x_max={x_max}")
    count = int(round(x_max / dx))
    return dx * np.arange(count + 1)


def chebyshev_nodes(count: int, upper: float) -> np.ndarray:
    """Chebyshev points of the first kind mapped to [0, upper], ascending."""
    if count < 1:
        raise ValueError(f"count must be positive, got {count}")
    k = np.arange(count)
    return np.sort(0.5 * upper * (1.0 - np.cos(np.pi * (k + 0.5) / count)))


def _ascending(nodes, variable: str) -> np.ndarray:
    """Nodes sorted ascending; repeated nodes are rejected."""
    points = np.sort(np.asarray(nodes, dtype=float).ravel())
    if points.size > 1 and np.any(np.diff(points) == 0.0):
        raise ValueError(f"transform_{variable} needs distinct nodes")
    return points


def transform_F(rho: SizeDistribution, nodes) -> TransformGrid:
    """F on the given nodes, returned in ascending x whatever their input order."""
    x = _ascending(nodes, "F")
    if np.any(x < 0.0):
        raise ValueError("transform_F needs nonnegative nodes")
    kernel = -np.expm1(-np.outer(x, rho.sizes))
    return TransformGrid("x", x, kernel @ rho.densities, moment(rho, 1))


def transform_G(rho: SizeDistribution, nodes) -> TransformGrid:
    z = _ascending(nodes, "G")
    if np.any(z < 0.0) or np.any(z > 1.0):
        raise ValueError("transform_G needs nodes in [0, 1]")
    with np.errstate(divide="ignore"):
        log_z = np.log(z)                              # z = 0 gives -inf and a unit kernel
    kernel = -np.expm1(np.outer(log_z, rho.sizes))
    return TransformGrid("z", z, kernel @ rho.densities, moment(rho, 1))


def transform_F_derivative(rho: SizeDistribution, nodes, order: int) -> np.ndarray:
    """d^k F / dx^k = (-1)**(k+1) sum_j j**k exp(-j x) rho(j)."""
    if order < 1:
        raise ValueError(f"derivative order must be at least 1, got {order}")
    x = np.asarray(nodes, dtype=float)
    weights = np.exp(-np.outer(x, rho.sizes)) * rho.sizes ** order
    return (-1.0) ** (order + 1) * (weights @ rho.densities)


def default_step(l: int) -> float:
    return min(1e-3, 0.1 / l)


def extraction_nodes(l: int, h: Optional[float] = None) -> np.ndarray:
    h = default_step(l) if h is None else h
    return h * np.arange(l + 1)


def extraction_error_constant(l: int) -> float:
    """A-priori bias constant 2**(l+2) (l+1)! l of the order-l forward difference, per unit h."""
    return float(2 ** (l + 2) * factorial(l + 1) * l)


def _locate(nodes: np.ndarray, targets: np.ndarray, h: float) -> np.ndarray:
    idx = np.clip(np.searchsorted(nodes, targets), 0, nodes.size - 1)
    left = np.clip(idx - 1, 0, nodes.size - 1)
    best = np.where(np.abs(nodes[left] - targets) < np.abs(nodes[idx] - targets), left, idx)
    if np.any(np.abs(nodes[best] - targets) > NODE_MATCH_RTOL * h):
        missing = targets[np.abs(nodes[best] - targets) > NODE_MATCH_RTOL * h]
        raise GridTooCoarse(f"extract_density: grid lacks nodes {missing[:4].tolist()} (h = {h:g})")
    return best


def power_amplification(l: int, degree: int) -> float:
    """
    Sum over k <= degree of |[t**l] T_k(2t - 1)|: how much a unit error in the
    Chebyshev coefficients on [0, 1] can move the t**l power coefficient.
    """
    total = 0.0
    for k in range(l, degree + 1):
        basis = Chebyshev.basis(k, domain=[0.0, 1.0])
        total += abs(basis.convert(kind=Polynomial, domain=[0.0, 1.0], window=[0.0, 1.0]).coef[l])
    return total


def _collocation_nodes(g: TransformGrid, count: int) -> np.ndarray:
    """Indices of the grid nodes nearest to `count` Chebyshev points spanning the grid."""
    targets = chebyshev_nodes(count, float(g.nodes[-1]))
    idx     = np.clip(np.searchsorted(g.nodes, targets), 1, len(g) - 1)
    nearer  = np.where(np.abs(g.nodes[idx - 1] - targets) <= np.abs(g.nodes[idx] - targets), idx - 1, idx)
    return np.unique(nearer)


def _extract_by_collocation(g: TransformGrid, l: int, support: int) -> float:
    """
    Solve G(z) = m0 - sum_{k <= L} rho(k) z**k for m0, rho(1..L) on Chebyshev-like
    nodes, with L the support of the distribution. The fit is done in the
    Chebyshev basis on [0, z_max] and read off in powers of t = z / z_max.
    """
    if support < l:
        raise ValueError(f"extract_density: order {l} lies beyond the support L = {support}")
    if len(g) < 2 or not g.nodes[-1] > 0.0:
        raise GridTooCoarse("extract_density: collocation needs nodes away from z = 0")

    upper = float(g.nodes[-1])
    scale = max(float(np.max(np.abs(g.values))), EPS)
    bound = power_amplification(l, support) * EPS / upper ** l      # relative to scale
    if bound > COLLOCATION_RTOL:
        raise IllConditioned(
                f"extract_density: rho({l}) from a support of {support} sizes on [0, {upper:g}] amplifies "
                f"rounding to {bound:.3e} of max |G|, above {COLLOCATION_RTOL:g}"
        )

    picked = _collocation_nodes(g, COLLOCATION_OVERSAMPLING * (support + 1))
    if picked.size <= support:
        raise GridTooCoarse(
                f"extract_density: support {support} needs more than {support} distinct nodes, "
                f"grid offers {picked.size}"
        )

    fit    = Chebyshev.fit(g.nodes[picked], g.values[picked], support, domain=[0.0, upper])
    series = fit.convert(kind=Polynomial, domain=[0.0, upper], window=[0.0, 1.0])
    logger.debug("collocation extraction of rho(%d), L=%d, error bound %.3e", l, support, bound * scale)
    return float(-series.coef[l] / upper ** l)


def extract_density(g: TransformGrid, l: int, h: Optional[float] = None, support: Optional[int] = None) -> float:
    """
    rho(l) from samples of G. Orders up to COLLOCATION_SWITCH use the forward
    difference -Delta_h^l G(0) / (l! h**l); higher orders solve the collocation
    system for rho(1..support) and need the support.
    """
    if g.variable != "z":
        raise ValueError("extract_density needs a z-form grid")
    if l < 1:
        raise ValueError(f"order l must be positive, got {l}")

    if l > COLLOCATION_SWITCH:
        if support is None:
            raise ValueError(f"extract_density: order {l} > {COLLOCATION_SWITCH} needs the support L")
        return _extract_by_collocation(g, l, support)

    h = default_step(l) if h is None else h
    if not 0.0 < l * h < 0.5:
        raise ValueError(f"extract_density needs 0 < l h < 1/2, got l={l}, h={h}")

    samples = g.values[_locate(g.nodes, extraction_nodes(l, h), h)]
    delta   = sum((-1) ** (l - j) * comb(l, j) * samples[j] for j in range(l + 1))
    return float(-delta / (factorial(l) * h ** l))


@dataclass(frozen=True)
class OrderCheck:
    order: int
    worst: float             # max of Delta_h^k G over feasible nodes, positive is a violation
    location: float          # node where the worst value sits
    tolerance: float
    passed: bool


@dataclass(frozen=True)
class MonotonicityReport:
    h: float
    scale: float
    orders: List[OrderCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(o.passed for o in self.orders)

    def worst_by_order(self) -> dict:
        return {o.order: o.worst for o in self.orders}


def monotonicity_tolerance(order: int, h: float, scale: float) -> float:
    """1e-8 k! h**k scale plus a rounding floor for a k-term alternating sum."""
    return 1e-8 * factorial(order) * h ** order * scale + 64.0 * 2.0 ** order * EPS * scale


def check_complete_monotonicity(g: TransformGrid, k_max: int, h: float) -> MonotonicityReport:
    """Forward differences Delta_h^k G(z) <= tol_k for k = 1..k_max at every feasible node."""
    if g.variable != "z":
        raise ValueError("check_complete_monotonicity needs a z-form grid")
    if k_max < 1:
        raise ValueError(f"k_max must be positive, got {k_max}")

    spacing = g.uniform_spacing()
    if spacing is None:
        raise GridTooCoarse("check_complete_monotonicity: grid is not uniform")
    stride = int(round(h / spacing))
    if stride < 1 or abs(stride * spacing - h) > NODE_MATCH_RTOL * h:
        raise GridTooCoarse(f"check_complete_monotonicity: h = {h:g} is not a multiple of the spacing {spacing:g}")
    z_max = float(g.nodes[-1])
    if not k_max * h < 0.5 * (1.0 - z_max):
        raise ValueError(f"check_complete_monotonicity needs k_max h < (1 - z_max)/2, "
                         f"got k_max h = {k_max * h:g} with z_max = {z_max:g}")
    if k_max * stride >= len(g):
        raise GridTooCoarse(f"check_complete_monotonicity: {len(g)} nodes cannot hold order {k_max} at h = {h:g}")

    scale  = max(float(np.max(np.abs(g.values))), EPS)
    diff   = g.values.copy()
    checks = []
    for order in range(1, k_max + 1):
        diff  = diff[stride:] - diff[:-stride]
        worst = int(np.argmax(diff))
        tol   = monotonicity_tolerance(order, h, scale)
        checks.append(OrderCheck(order, float(diff[worst]), float(g.nodes[worst]), tol, bool(diff[worst] <= tol)))

    report = MonotonicityReport(h=h, scale=scale, orders=checks)
    if not report.passed:
        logger.warning("complete monotonicity violated: %s",
                       {o.order: f"{o.worst:.3e}" for o in report.orders if not o.passed})
    return report


@dataclass(frozen=True)
class TaylorRemainder:
    z: float
    k: int
    gap: float
    bound: float

    @property
    def satisfied(self) -> bool:
        return self.gap <= self.bound


def taylor_remainder_check(rho: SizeDistribution, z: float, k: int) -> TaylorRemainder:
    """
    |G(z) - (G(0) - sum_{l<=k} rho(l) z**l)| against (k+1) z**(k+1) / (1-z)**2.

    The gap equals the series tail sum_{l>k} rho(l) z**l, which is summed
    directly so that small gaps are not lost to cancellation.
    """
    if not 0.0 <= z < 1.0:
        raise ValueError(f"z must lie in [0, 1), got {z}")
    if k < 0:
        raise ValueError(f"k must be nonnegative, got {k}")
    sizes = rho.sizes
    tail  = sizes > k
    gap   = float(np.dot(rho.densities[tail], np.power(z, sizes[tail])))
    bound = (k + 1) * z ** (k + 1) / (1.0 - z) ** 2
    return TaylorRemainder(z=z, k=k, gap=gap, bound=bound)
