"""
Stationary solution of the critical coagulation-fragmentation system.

For total mass m the stationary densities satisfy, for l = 1, 2, ...

    rho(l) = [2m(1-m) + sum_{i<l} i(l-i) rho(i) rho(l-i) - 2 sum_{i<l} rho(i)] / ((2m+1) l + 1)

Tables are produced in floating point (direct or FFT-accelerated) and, for small
lengths, in exact rational arithmetic.
"""

import logging
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Dict, List, Literal, Optional, Union

import numpy as np

from kinetics.rhs_coag_frag import fft_convolve, rhs_arrays

logger = logging.getLogger(__name__)

RecursionMethod = Literal["direct", "fft", "auto"]
VerdictKind     = Literal["exists_unique", "nonexistent", "conjectural"]

FFT_AUTO_LENGTH  = 10_000   # auto switches to the online FFT recursion above this length
CDQ_LEAF         = 64       # block size finished by explicit sums
NP_CONVOLVE_MAX  = 64       # shorter operands are convolved directly
EPS              = np.finfo(float).eps


@dataclass(frozen=True)
class EquilibriumTable:
    mass_m: float
    length_l: int
    values: np.ndarray                  # rho~(l) for l = 1..L at index l - 1
    partial_m0: float
    partial_m1: float
    method: str = "direct"

    @property
    def sizes(self) -> np.ndarray:
        return np.arange(1, self.length_l + 1, dtype=float)

    def value(self, l: int) -> float:
        return float(self.values[l - 1])


def _denominators(m: float, length: int) -> np.ndarray:
    return (2.0 * m + 1.0) * np.arange(1, length + 1, dtype=float) + 1.0


def _remainder(source: float, prefix: float, l: int) -> float:
    """2 (m(1-m) - sum_{i<l} rho(i)), zeroed once it is below the rounding error of the prefix sum."""
    remainder = source - 2.0 * prefix
    if abs(remainder) <= 4.0 * EPS * (l + 1) * max(abs(source), abs(prefix)):
        return 0.0
    return remainder


def _recursion_direct(m: float, length: int) -> np.ndarray:
    source = 2.0 * m * (1.0 - m)
    denom  = _denominators(m, length)

    values = np.zeros(length)
    u      = np.zeros(length)          # u[l - 1] = l rho(l)
    prefix = 0.0                       # sum_{i<l} rho(i)

    for idx in range(length):
        # sizes i and l - i with l = idx + 1 live at u[a] and u[idx - 1 - a]
        conv = float(np.dot(u[:idx], u[idx - 1::-1])) if idx > 0 else 0.0
        values[idx] = (conv + _remainder(source, prefix, idx + 1)) / denom[idx]
        u[idx]      = (idx + 1) * values[idx]
        prefix     += values[idx]

    return values


def _convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if min(a.size, b.size) <= NP_CONVOLVE_MAX:
        return np.convolve(a, b)
    return fft_convolve(a, b)


def _recursion_fft(m: float, length: int) -> np.ndarray:
    """
    Online divide-and-conquer self-convolution over power-of-two blocks.

    Arrays here are indexed by size (index 0 is the empty size, u[0] = 0). acc[k]
    collects sum_{i+j=k} u_i u_j from every block whose pairs are already known.
    """
    top   = 1 << int(np.ceil(np.log2(length + 1)))
    m_src = 2.0 * m * (1.0 - m)

    u      = np.zeros(top)
    acc    = np.zeros(top)
    values = np.zeros(top)
    state  = {"prefix": 0.0}

    def finish(k: int, lo: int):
        if lo == 0:
            conv = float(np.dot(u[1:k], u[k - 1:0:-1])) if k > 1 else 0.0
        else:
            # partners of sizes lo..k-1 lie below lo, each unordered pair counted twice
            conv = acc[k] + 2.0 * float(np.dot(u[lo:k], u[k - lo:0:-1]))
        values[k] = (conv + _remainder(m_src, state["prefix"], k)) / ((2.0 * m + 1.0) * k + 1.0)
        u[k]      = k * values[k]
        state["prefix"] += values[k]

    def solve(lo: int, hi: int):
        if hi - lo <= CDQ_LEAF:
            for k in range(max(lo, 1), hi):
                finish(k, lo)
            return

        mid = (lo + hi) // 2
        solve(lo, mid)

        if lo == 0:
            contrib = _convolve(u[0:mid], u[0:mid])[mid:hi]     # stops at size hi - 2
            acc[mid:mid + contrib.size] += contrib
        else:
            contrib = _convolve(u[lo:mid], u[0:hi - lo])
            acc[mid:hi] += 2.0 * contrib[mid - lo:hi - lo]

        solve(mid, hi)

    solve(0, top)
    return values[1:length + 1].copy()


def recursion(m: float, length: int, method: RecursionMethod = "auto") -> EquilibriumTable:
    """rho~(1..L) for mass m. Negative values are kept; they witness nonexistence for m >= 1."""
    if not m > 0.0:
        raise ValueError(f"mass m must be positive, got {m}")
    if length < 1:
        raise ValueError(f"length L must be at least 1, got {length}")
    if method not in ("direct", "fft", "auto"):
        raise ValueError(f"Invalid recursion method '{method}', expected direct, fft or auto")

    resolved = method
    if method == "auto":
        resolved = "fft" if length > FFT_AUTO_LENGTH else "direct"

    values = _recursion_fft(m, length) if resolved == "fft" else _recursion_direct(m, length)
    sizes  = np.arange(1, length + 1, dtype=float)

    logger.debug("recursion m=%g L=%d via %s", m, length, resolved)
    return EquilibriumTable(
            mass_m=float(m),
            length_l=length,
            values=values,
            partial_m0=float(values.sum()),
            partial_m1=float(np.dot(sizes, values)),
            method=resolved,
    )


def recursion_exact(m: Union[Fraction, int, str], length: int) -> List[Fraction]:
    """The recursion in rational arithmetic; O(L^2) Fractions, meant for small L."""
    m = Fraction(m)
    if m <= 0:
        raise ValueError(f"mass m must be positive, got {m}")
    if length < 1:
        raise ValueError(f"length L must be at least 1, got {length}")

    source = 2 * m * (1 - m)
    values: List[Fraction] = []
    prefix = Fraction(0)

    for l in range(1, length + 1):
        conv = sum((i * (l - i) * values[i - 1] * values[l - i - 1] for i in range(1, l)), Fraction(0))
        value = (source + conv - 2 * prefix) / ((2 * m + 1) * l + 1)
        values.append(value)
        prefix += value

    return values


def coefficient_identity_residual(table: EquilibriumTable) -> np.ndarray:
    """
    Coefficient of z^l in the stationary equation after substituting the series

        (m(1-m) - sum_{i<l} rho(i)) + 1/2 sum_{i<l} i(l-i) rho(i) rho(l-i) - ((m + 1/2) l + 1/2) rho(l)

    for l = 1..L. Recursion output makes every coefficient vanish.
    """
    m      = table.mass_m
    values = table.values
    sizes  = table.sizes
    u      = sizes * values

    conv   = np.zeros(table.length_l)
    if table.length_l > 1:
        conv[1:] = _convolve(u, u)[: table.length_l - 1]
    prefix = np.concatenate(([0.0], np.cumsum(values)[:-1]))

    return (m * (1.0 - m) - prefix) + 0.5 * conv - ((m + 0.5) * sizes + 0.5) * values


@dataclass(frozen=True)
class EquilibriumVerdict:
    kind: VerdictKind
    mass_m: float
    length_l: int
    witness: Optional[float] = None            # rho~(1) when nonexistent
    witness_exact: Optional[str] = None        # same value as a rational when m is rational
    min_value: Optional[float] = None
    min_location: Optional[int] = None
    negative_count: int = 0
    table: Optional[EquilibriumTable] = field(default=None, repr=False)

    def to_dict(self) -> Dict[str, object]:
        return {
                "verdict"        : self.kind,
                "mass_m"         : self.mass_m,
                "length_l"       : self.length_l,
                "witness"        : self.witness,
                "witness_exact"  : self.witness_exact,
                "min_value"      : self.min_value,
                "min_location"   : self.min_location,
                "negative_count" : self.negative_count,
        }


def existence_verdict(m: float, length: int, method: RecursionMethod = "auto") -> EquilibriumVerdict:
    """
    exists_unique for m <= 1/2, nonexistent for m >= 1 (rho~(1) <= 0 is the witness),
    conjectural in between with a positivity scan of the first L terms.
    """
    table    = recursion(m, length, method)
    location = int(np.argmin(table.values)) + 1
    minimum  = float(table.values[location - 1])
    negative = int(np.count_nonzero(table.values < 0.0))

    if m >= 1.0:
        exact = recursion_exact(Fraction(str(m)), 1)[0]
        logger.info("m=%g: no stationary solution, rho~(1) = %s", m, exact)
        return EquilibriumVerdict(
                kind="nonexistent", mass_m=m, length_l=length,
                witness=table.value(1), witness_exact=str(exact),
                min_value=minimum, min_location=location, negative_count=negative, table=table,
        )

    if m <= 0.5:
        if negative:
            logger.warning("m=%g: %d negative entries in the stationary table, first minimum %.3e at l=%d",
                           m, negative, minimum, location)
        return EquilibriumVerdict(
                kind="exists_unique", mass_m=m, length_l=length,
                min_value=minimum, min_location=location, negative_count=negative, table=table,
        )

    logger.info("m=%g: positivity scan over l <= %d, min %.3e at l=%d", m, length, minimum, location)
    return EquilibriumVerdict(
            kind="conjectural", mass_m=m, length_l=length,
            min_value=minimum, min_location=location, negative_count=negative, table=table,
    )


@dataclass(frozen=True)
class EquilibriumValidation:
    mass_m: float
    length_l: int
    m0_gap: float                 # |sum rho~ - m(1-m)|
    m1_gap: float                 # |sum l rho~ - m|
    tail_ratio: Optional[float]   # fitted geometric decay ratio of the last entries
    tail_estimate: float          # estimated m0 mass beyond L
    rhs_residual: float           # sup_{j <= L/2} |Q_c + Q_f| on the table

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)


def _tail_fit(values: np.ndarray):
    length = values.size
    window = np.arange(length - max(length // 4, 2), length)
    window = window[window >= 0]
    usable = window[values[window] > 1e-280]
    if usable.size < 2:
        return None, 0.0

    slope, _ = np.polyfit(usable + 1.0, np.log(values[usable]), 1)
    ratio = float(np.exp(slope))
    if not ratio < 1.0:
        return ratio, float("inf")
    last = float(values[usable[-1]])
    gap  = length - (usable[-1] + 1)
    return ratio, last * ratio ** (gap + 1) / (1.0 - ratio)


def validate(table: EquilibriumTable, mode: str = "direct", workers: Optional[int] = None) -> EquilibriumValidation:
    """Moment gaps, tail decay and the right-hand-side residual of the table with N = L."""
    m = table.mass_m
    if not 0.0 < m <= 0.5:
        raise ValueError(f"validate expects m in (0, 1/2], got {m}")
    if table.length_l < 2:
        raise ValueError(f"validate needs L >= 2, got {table.length_l}")

    d, _ = rhs_arrays(table.values, mode, workers)
    interior = table.length_l // 2
    ratio, tail = _tail_fit(table.values)

    report = EquilibriumValidation(
            mass_m=m,
            length_l=table.length_l,
            m0_gap=abs(table.partial_m0 - m * (1.0 - m)),
            m1_gap=abs(table.partial_m1 - m),
            tail_ratio=ratio,
            tail_estimate=tail,
            rhs_residual=float(np.max(np.abs(d[:interior]))),
    )
    logger.info("equilibrium m=%g L=%d: m0 gap %.3e, m1 gap %.3e, rhs residual %.3e",
                m, table.length_l, report.m0_gap, report.m1_gap, report.rhs_residual)
    return report
