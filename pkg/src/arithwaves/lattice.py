"""Exact integer arithmetic for sums of two squares.

Everything here works on Python integers, so results are exact for any
size of ``n``; only the convenience array views and the angles use floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

__all__ = [
    "Factorization",
    "FrequencySet",
    "PrimeAngle",
    "EnergySequence",
    "NotSumOfTwoSquaresError",
    "SequenceExhaustedError",
    "factorize",
    "is_prime",
    "r2",
    "enumerate_lambda",
    "enumerate_lambda_gaussian",
    "prime_angle",
    "split_primes",
    "build_sequence",
]

# scan path is used up to this n by default; beyond it the Gaussian-integer
# product is the only practical route (sqrt(1e12) = 1e6 candidate rows)
SCAN_LIMIT = 10**12


class NotSumOfTwoSquaresError(ValueError):
    """Raised when ``n`` has no representation as a sum of two squares."""


class SequenceExhaustedError(RuntimeError):
    """Raised when a prime search runs past its bound before finding enough terms."""


@dataclass(frozen=True)
class Factorization:
    n: int
    factors: tuple[tuple[int, int], ...]

    def __post_init__(self):
        prod = 1
        for p, e in self.factors:
            prod *= p**e
        if prod != self.n:
            raise ValueError(f"factors {self.factors} do not multiply to {self.n}")

    def exponent(self, p: int) -> int:
        for q, e in self.factors:
            if q == p:
                return e
        return 0


def factorize(n: int) -> Factorization:
    """Trial-division factorization of a positive integer.

    Cheap for everything the experiments touch; numbers with two large
    prime factors near 2**31 take a few seconds.
    """
    n = int(n)
    if n < 1:
        raise ValueError(f"factorize needs n >= 1, got {n}")
    factors = []
    m = n
    for p in (2, 3):
        e = 0
        while m % p == 0:
            m //= p
            e += 1
        if e:
            factors.append((p, e))
    d = 5
    step = 2
    while d * d <= m:
        if m % d == 0:
            e = 0
            while m % d == 0:
                m //= d
                e += 1
            factors.append((d, e))
        d += step
        step = 6 - step
    if m > 1:
        factors.append((m, 1))
    return Factorization(n, tuple(factors))


def is_prime(p: int) -> bool:
    if p < 2:
        return False
    f = factorize(p).factors
    return len(f) == 1 and f[0][1] == 1


def r2(n: int) -> int:
    """Number of integer pairs (a, b) with a**2 + b**2 == n."""
    count = 4
    for p, e in factorize(n).factors:
        if p % 4 == 3 and e % 2:
            return 0
        if p % 4 == 1:
            count *= e + 1
    return count


def _angle_key(point: tuple[int, int]) -> float:
    a = math.atan2(point[1], point[0])
    return a + 2 * math.pi if a < 0 else a


@dataclass(frozen=True)
class FrequencySet:
    """Lattice points on the circle of radius sqrt(n), sorted by angle in [0, 2pi)."""

    n: int
    points: tuple[tuple[int, int], ...]
    _array: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for a, b in self.points:
            if a * a + b * b != self.n:
                raise ValueError(f"({a}, {b}) is not on the circle of radius sqrt({self.n})")
        if len(set(self.points)) != len(self.points):
            raise ValueError("duplicate lattice points")
        fits = self.n < 2**62
        arr = np.array(self.points, dtype=np.int64 if fits else object).reshape(-1, 2)
        arr.setflags(write=False)
        object.__setattr__(self, "_array", arr)

    @property
    def N(self) -> int:
        return len(self.points)

    @property
    def E(self) -> float:
        return 4 * math.pi**2 * self.n

    @property
    def array(self) -> np.ndarray:
        """Read-only (N, 2) view; int64 when n < 2**62, object dtype otherwise."""
        return self._array

    @property
    def unit_points(self) -> np.ndarray:
        """Projections lambda / sqrt(n) onto the unit circle, as floats."""
        angles = np.array([_angle_key(p) for p in self.points])
        return np.column_stack([np.cos(angles), np.sin(angles)])

    @property
    def half(self) -> tuple[tuple[int, int], ...]:
        """One representative of each {lambda, -lambda} pair (a > 0, or a == 0 and b > 0)."""
        return tuple(p for p in self.points if p[0] > 0 or (p[0] == 0 and p[1] > 0))

    @property
    def max_coordinate(self) -> int:
        return math.isqrt(self.n)

    def __len__(self):
        return len(self.points)

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return iter(self.points)


def _from_points(n: int, points) -> FrequencySet:
    return FrequencySet(n, tuple(sorted(set(points), key=_angle_key)))


def _signed_orbit(a: int, b: int):
    for x, y in ((a, b), (b, a)):
        for sx in (1, -1):
            for sy in (1, -1):
                yield sx * x, sy * y


def _scan_points(n: int) -> list[tuple[int, int]]:
    root = math.isqrt(n)
    pts = []
    if n < 2**62:
        a = np.arange(root + 1, dtype=np.int64)
        rest = n - a * a
        b = np.floor(np.sqrt(rest.astype(np.float64))).astype(np.int64)
        # float sqrt can be off by one either way near perfect squares
        b[b * b > rest] -= 1
        b[(b + 1) * (b + 1) <= rest] += 1
        hit = b * b == rest
        pairs = zip(a[hit].tolist(), b[hit].tolist())
    else:
        pairs = []
        for a in range(root + 1):
            b = math.isqrt(n - a * a)
            if b * b == n - a * a:
                pairs.append((a, b))
    for a, b in pairs:
        pts.extend(_signed_orbit(int(a), int(b)))
    return pts


def _gauss_mul(z, w):
    return (z[0] * w[0] - z[1] * w[1], z[0] * w[1] + z[1] * w[0])


def _gauss_pow(z, e):
    out = (1, 0)
    for _ in range(e):
        out = _gauss_mul(out, z)
    return out


def enumerate_lambda_gaussian(n: int) -> FrequencySet:
    """Lambda_n from the Gaussian-integer factorization of n.

    Every point is i**k * (1+i)**e2 * prod_p pi_p**(e_p - l) * conj(pi_p)**l
    * prod_q q**(e_q / 2) with 0 <= l <= e_p.
    """
    fac = factorize(n)
    base = [(1, 0)]
    for p, e in fac.factors:
        if p == 2:
            z = _gauss_pow((1, 1), e)
            base = [_gauss_mul(w, z) for w in base]
        elif p % 4 == 3:
            if e % 2:
                raise NotSumOfTwoSquaresError(f"{n} is not a sum of two squares")
            base = [(w[0] * p ** (e // 2), w[1] * p ** (e // 2)) for w in base]
        else:
            ang = prime_angle(p)
            pi_p, pi_bar = (ang.x, ang.y), (ang.x, -ang.y)
            choices = [_gauss_mul(_gauss_pow(pi_p, e - l), _gauss_pow(pi_bar, l)) for l in range(e + 1)]
            base = [_gauss_mul(w, c) for w in base for c in choices]
    units = [(1, 0), (0, 1), (-1, 0), (0, -1)]
    return _from_points(n, (_gauss_mul(u, w) for w in base for u in units))


def enumerate_lambda(n: int, method: str = "auto") -> FrequencySet:
    """All lattice points on the circle ||lambda||**2 == n.

    ``method`` is ``"scan"`` (exact integer square-root test over
    0 <= a <= sqrt(n)), ``"gaussian"`` (Gaussian-integer product) or
    ``"auto"``, which scans up to ``SCAN_LIMIT`` and factors beyond it.
    """
    n = int(n)
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if r2(n) == 0:
        raise NotSumOfTwoSquaresError(f"{n} is not a sum of two squares")
    if method == "auto":
        method = "scan" if n <= SCAN_LIMIT else "gaussian"
    if method == "scan":
        return _from_points(n, _scan_points(n))
    if method == "gaussian":
        return enumerate_lambda_gaussian(n)
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class PrimeAngle:
    p: int
    x: int
    y: int

    @property
    def theta(self) -> float:
        return math.atan2(self.y, self.x)


def prime_angle(p: int) -> PrimeAngle:
    """The unique representation p = x**2 + y**2 with 0 <= y <= x."""
    p = int(p)
    if p % 4 != 1 or not is_prime(p):
        raise ValueError(f"{p} is not a prime congruent to 1 mod 4")
    ang = _two_squares(p, math.isqrt(p // 2))
    assert ang is not None  # Fermat
    return ang


def _two_squares(p: int, y_max: int) -> PrimeAngle | None:
    for y in range(1, y_max + 1):
        x2 = p - y * y
        x = math.isqrt(x2)
        if x * x == x2:
            return PrimeAngle(p, x, y)
    return None


def split_primes(bound: int) -> Iterator[int]:
    """Primes p = 1 mod 4 below ``bound``, ascending."""
    if bound < 6:
        return
    sieve = np.ones(bound, dtype=bool)
    sieve[:2] = False
    for i in range(2, math.isqrt(bound - 1) + 1):
        if sieve[i]:
            sieve[i * i :: i] = False
    for p in np.flatnonzero(sieve):
        if p % 4 == 1:
            yield int(p)


@dataclass(frozen=True)
class EnergySequence:
    kind: str
    terms: tuple[int, ...]
    target: str
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        mults = [r2(t) for t in self.terms]
        if any(m == 0 for m in mults):
            raise ValueError("every term must be a sum of two squares")
        if any(b <= a for a, b in zip(self.terms, self.terms[1:])):
            raise ValueError("terms must be strictly increasing")
        if any(b <= a for a, b in zip(mults, mults[1:])):
            raise ValueError("multiplicities must be strictly increasing")

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)


def _small_angle_stream(search_bound: int, theta0: float) -> Iterator[PrimeAngle]:
    """Split primes whose angles fall under the schedule theta0 / k**2, k = 1, 2, ..."""
    k = 1
    for p in split_primes(search_bound):
        limit = theta0 / k**2
        # theta_p <= limit forces y_p <= sqrt(p) * sin(limit)
        ang = _two_squares(p, min(math.isqrt(p // 2), int(math.sqrt(p) * math.sin(limit)) + 1))
        if ang is not None and ang.theta <= limit:
            yield ang
            k += 1


def build_sequence(
    kind: str,
    count: int,
    search_bound: int = 10**6,
    a: float | None = None,
    theta0: float = 0.25,
) -> EnergySequence:
    """Energy levels whose spectral measures approach a chosen limit.

    generic
        Products of the first ``count`` split primes, 5, 5*13, 5*13*17, ...
        (multiplicity 4 * 2**k, angles spread out).
    cilleruelo
        p_k**k where p_k is the k-th prime found with theta_p <= theta0 / k**2,
        so k * theta_{p_k} -> 0 and the measure collapses onto {1, i, -1, -i}.
    nu_a
        p**floor(a / theta_p) over the same prime stream, keeping only primes
        that make the multiplicity grow; the measure approaches the uniform
        measure on four arcs of half-width ``a``.
    """
    if count < 1:
        raise ValueError("count must be positive")
    if kind == "generic":
        primes = []
        for p in split_primes(search_bound):
            primes.append(p)
            if len(primes) == count:
                break
        if len(primes) < count:
            raise SequenceExhaustedError(f"only {len(primes)} split primes below {search_bound}")
        terms = tuple(math.prod(primes[: i + 1]) for i in range(count))
        return EnergySequence("generic", terms, "uniform measure on the circle", {"count": count})

    if kind == "cilleruelo":
        terms = []
        for k, ang in enumerate(_small_angle_stream(search_bound, theta0), start=1):
            terms.append(ang.p**k)
            if len(terms) == count:
                break
        if len(terms) < count:
            raise SequenceExhaustedError(
                f"found {len(terms)} of {count} small-angle primes below {search_bound}"
            )
        return EnergySequence(
            "cilleruelo", tuple(terms), "atomic measure on {1, i, -1, -i}",
            {"count": count, "theta0": theta0},
        )

    if kind == "nu_a":
        if a is None or not 0 < a <= math.pi / 4 + 1e-12:
            raise ValueError(f"nu_a needs 0 < a <= pi/4, got {a}")
        terms = []
        last_e = 0
        for ang in _small_angle_stream(search_bound, theta0):
            e = math.floor(a / ang.theta)
            if e <= last_e:
                continue
            terms.append(ang.p**e)
            last_e = e
            if len(terms) == count:
                break
        if len(terms) < count:
            raise SequenceExhaustedError(
                f"found {len(terms)} of {count} nu_a terms below {search_bound}"
            )
        return EnergySequence(
            "nu_a", tuple(terms), f"uniform measure on four arcs of half-width {a}",
            {"count": count, "a": a, "theta0": theta0},
        )

    raise ValueError(f"unknown sequence kind {kind!r}")
