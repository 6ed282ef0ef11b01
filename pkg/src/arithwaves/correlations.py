"""Spectral correlation counts and the moments R_k of the covariance function.

S_k(n) is the set of k-tuples of frequencies summing to zero.  Because the
covariance r is (1/N) times a sum of exponentials, the even moments are
exact counts: R_{2m} = |S_{2m}| / N^{2m}.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

import numpy as np

from .lattice import EnergySequence, FrequencySet, enumerate_lambda
from .torus import cos_grid, exact_grid_size

__all__ = [
    "CapExceededError",
    "NonConvergenceError",
    "CorrelationCensus",
    "S6_CAP",
    "count_s4",
    "count_s4_bruteforce",
    "count_s6",
    "count_s6_bruteforce",
    "diagonal_s6_count",
    "sum_counts",
    "sumset",
    "additive_energy",
    "r_moment",
    "r_moment_exact",
    "grid_moment",
    "s6_decay_scan",
    "census",
]

S6_CAP = 256


class CapExceededError(ValueError):
    """The multiplicity is above the cap configured for an algorithm."""


class NonConvergenceError(ArithmeticError):
    """Doubling the quadrature grid moved the result by more than the tolerance."""


def _keys(vectors: np.ndarray, bound: int) -> np.ndarray:
    """Injective int64 keys for integer 2-vectors with coordinates in [-bound, bound]."""
    width = 2 * bound + 1
    return (vectors[..., 0] + bound) * width + (vectors[..., 1] + bound)


def _small(fs: FrequencySet, terms: int) -> bool:
    width = 2 * terms * fs.max_coordinate + 1
    return width * width < 2**62


def sum_counts(fs: FrequencySet, terms: int) -> Counter:
    """Map v -> #{(l_1..l_terms) in Lambda^terms : sum = v}, keyed by integer tuples."""
    counts: Counter = Counter({(0, 0): 1})
    for _ in range(terms):
        nxt: Counter = Counter()
        for (x, y), c in counts.items():
            for a, b in fs.points:
                nxt[(x + a, y + b)] += c
        counts = nxt
    return counts


def count_s4(fs: FrequencySet) -> int:
    """|S_4(n)| = 3N^2 - 3N.

    A zero-sum quadruple on a circle must pair up as l1 = -l2, l1 = -l3 or
    l1 = -l4; each pairing gives N^2 tuples, any two pairings share exactly
    N tuples, and no tuple satisfies all three.
    """
    N = fs.N
    return 3 * N * N - 3 * N


def count_s4_bruteforce(fs: FrequencySet) -> int:
    """O(N^3) oracle: for each triple test whether minus its sum is a frequency."""
    pts = set(fs.points)
    P = fs.points
    total = 0
    for a1, b1 in P:
        for a2, b2 in P:
            s1, t1 = a1 + a2, b1 + b2
            for a3, b3 in P:
                if (-s1 - a3, -t1 - b3) in pts:
                    total += 1
    return total


def count_s6(fs: FrequencySet, cap: int = S6_CAP) -> int:
    """|S_6(n)| = sum_v r3(v)^2 with r3 the 3-fold sum representation count."""
    if fs.N > cap:
        raise CapExceededError(f"N = {fs.N} exceeds the S_6 cap {cap}")
    if not _small(fs, 3):
        return sum(c * c for c in sum_counts(fs, 3).values())
    bound = 3 * fs.max_coordinate
    A = fs.array.astype(np.int64)
    two = (A[:, None, :] + A[None, :, :]).reshape(-1, 2)
    keys = np.empty(len(two) * len(A), dtype=np.int64)
    # chunked over the third summand to keep peak memory at one key array
    for i, lam in enumerate(A):
        keys[i * len(two) : (i + 1) * len(two)] = _keys(two + lam, bound)
    _, counts = np.unique(keys, return_counts=True)
    return int(sum(int(c) * int(c) for c in counts))


def count_s6_bruteforce(fs: FrequencySet, limit: int = 16) -> int:
    """O(N^5) oracle, membership test of minus each 5-sum."""
    if fs.N > limit:
        raise CapExceededError(f"brute-force S_6 oracle limited to N <= {limit}")
    A = fs.array.astype(np.int64)
    bound = 6 * fs.max_coordinate
    members = np.sort(_keys(-A, bound))
    acc = np.zeros((1, 2), dtype=np.int64)
    for _ in range(5):
        acc = (acc[:, None, :] + A[None, :, :]).reshape(-1, 2)
    keys = _keys(acc, bound)
    idx = np.clip(np.searchsorted(members, keys), 0, len(members) - 1)
    return int(np.count_nonzero(members[idx] == keys))


def diagonal_s6_count(N: int) -> int:
    """Number of 6-tuples that split into three pairs {l, -l}.

    Inclusion-exclusion over the 15 perfect matchings of six slots; the
    closed form is 15N^3 - 45N^2 + 40N (for N = 4 all 400 solutions are of
    this type).
    """
    return 15 * N**3 - 45 * N**2 + 40 * N


def sumset(fs: FrequencySet) -> list[tuple[int, int]]:
    """A = (Lambda + Lambda) minus the origin, sorted."""
    out = {(a1 + a2, b1 + b2) for a1, b1 in fs.points for a2, b2 in fs.points}
    out.discard((0, 0))
    return sorted(out)


def additive_energy(fs: FrequencySet, cap: int = 128) -> int:
    """E(A, A) = #{(y1, y2, y3, y4) in A^4 : y1 + y2 = y3 + y4}."""
    if fs.N > cap:
        raise CapExceededError(f"N = {fs.N} exceeds the additive-energy cap {cap}")
    A = np.array(sumset(fs), dtype=object if not _small(fs, 4) else np.int64)
    if A.dtype == object:
        reps = Counter((a1 + a2, b1 + b2) for a1, b1 in A for a2, b2 in A)
        return sum(c * c for c in reps.values())
    bound = 4 * fs.max_coordinate
    keys = np.empty(len(A) * len(A), dtype=np.int64)
    for i, y in enumerate(A):
        keys[i * len(A) : (i + 1) * len(A)] = _keys(A + y, bound)
    _, counts = np.unique(keys, return_counts=True)
    counts = counts.astype(np.int64)
    return int(np.dot(counts, counts))


def grid_moment(fs: FrequencySet, k: int, M: int, absolute: bool = True) -> float:
    """Grid average of |r|^k (or r^k) on the M x M torus grid."""
    r = cos_grid(fs.points, np.full(fs.N, 1.0 / fs.N), M)
    vals = np.abs(r) ** k if absolute else r**k
    return float(vals.mean())


def r_moment_exact(fs: FrequencySet, k: int, cap: int = S6_CAP) -> Fraction:
    """R_k for even k in {2, 4, 6} as an exact rational."""
    if k == 2:
        return Fraction(1, fs.N)
    if k == 4:
        return Fraction(count_s4(fs), fs.N**4)
    if k == 6:
        return Fraction(count_s6(fs, cap), fs.N**6)
    raise ValueError(f"exact moments are available for k in (2, 4, 6), got {k}")


def r_moment(fs: FrequencySet, k: int, grid_M: int | None = None, rtol: float = 1e-3) -> float:
    """R_k(n) = integral over the torus of |r|^k, for k in 2..6.

    Even k comes from exact counts.  Odd k is a grid average checked against
    the grid of twice the size.
    """
    if not 2 <= k <= 6:
        raise ValueError(f"k must lie in 2..6, got {k}")
    if k % 2 == 0:
        return float(r_moment_exact(fs, k))
    root = math.isqrt(fs.n - 1) + 1 if fs.n > 1 else 1
    minimum = 2 * k * root + 1
    if grid_M is None:
        grid_M = exact_grid_size(minimum - 1)
    elif grid_M < minimum:
        raise ValueError(f"grid_M = {grid_M} is below 2k*ceil(sqrt(n))+1 = {minimum}")
    coarse = grid_moment(fs, k, grid_M)
    fine = grid_moment(fs, k, 2 * grid_M)
    if abs(coarse - fine) > rtol * abs(fine):
        raise NonConvergenceError(f"R_{k}: M={grid_M} gives {coarse}, 2M gives {fine}")
    return fine


@dataclass(frozen=True)
class CorrelationCensus:
    n: int
    N: int
    s4_count: int
    s6_count: int
    additive_energy: int | None
    r_moments: dict = field(default_factory=dict)


def census(fs: FrequencySet, cap: int = S6_CAP, energy_cap: int = 128) -> CorrelationCensus:
    s4 = count_s4(fs)
    s6 = count_s6(fs, cap)
    N = fs.N
    energy = additive_energy(fs, energy_cap) if N <= energy_cap else None
    moments = {
        2: 1 / N,
        3: r_moment(fs, 3),
        4: s4 / N**4,
        5: r_moment(fs, 5),
        6: s6 / N**6,
    }
    return CorrelationCensus(fs.n, N, s4, s6, energy, moments)


@dataclass(frozen=True)
class S6Row:
    n: int
    N: int
    s6: int
    s6_over_N4: float
    s6_over_N3: float


def s6_decay_scan(seq: EnergySequence | Iterable[int], cap: int = S6_CAP) -> list[S6Row]:
    """|S_6| normalized by N^4 and N^3 along a sequence of levels."""
    rows = []
    for n in seq:
        fs = enumerate_lambda(n)
        s6 = count_s6(fs, cap)
        rows.append(S6Row(n, fs.N, s6, s6 / fs.N**4, s6 / fs.N**3))
    return rows
