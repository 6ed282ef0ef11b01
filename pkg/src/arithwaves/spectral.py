"""The spectral measure of a frequency set and its Fourier coefficients.

The measure puts mass 1/N on each projected point lambda / sqrt(n) of the
unit circle.  Because the frequency set is closed under z -> iz and
z -> conj(z), every coefficient with k not divisible by 4 vanishes and the
remaining ones are real; for those we work in exact rational arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

import numpy as np

from .lattice import EnergySequence, FrequencySet, enumerate_lambda

__all__ = [
    "SpectralSummary",
    "mu_hat",
    "mu_hat_exact",
    "c_n",
    "c_n_exact",
    "B4_direct",
    "nu_a_hat",
    "spectral_summary",
    "convergence_report",
]


def _conj_power_real_sum(fs: FrequencySet, k: int) -> int:
    """Sum over lambda of Re(conj(z)**k) with z = lambda1 + i*lambda2, exactly."""
    total = 0
    for a, b in fs.points:
        re, im = 1, 0
        # conj(z)**k by repeated squaring on Gaussian integers
        base_re, base_im = a, -b
        e = k
        while e:
            if e & 1:
                re, im = re * base_re - im * base_im, re * base_im + im * base_re
            base_re, base_im = base_re * base_re - base_im * base_im, 2 * base_re * base_im
            e >>= 1
        total += re
    return total


def mu_hat_exact(fs: FrequencySet, k: int) -> Fraction:
    """Exact value of the k-th Fourier coefficient for k divisible by 4."""
    if k % 4:
        return Fraction(0)
    k = abs(k)  # the measure is conjugation invariant
    return Fraction(_conj_power_real_sum(fs, k), fs.N * fs.n ** (k // 2))


def mu_hat(fs: FrequencySet, k: int) -> float:
    """k-th Fourier coefficient, integral of z**(-k) against the spectral measure.

    Exact (then rounded) when 4 divides k, floating point otherwise.
    """
    if k % 4 == 0:
        return float(mu_hat_exact(fs, k))
    z = fs.unit_points
    ang = np.arctan2(z[:, 1], z[:, 0])
    val = np.mean(np.exp(-1j * k * ang))
    if abs(val.imag) > 1e-12:
        raise ArithmeticError(f"imaginary part {val.imag:g} of mu_hat({k}) did not vanish")
    return float(val.real)


def c_n_exact(fs: FrequencySet) -> Fraction:
    return (1 + mu_hat_exact(fs, 4) ** 2) / 512


def c_n(fs: FrequencySet) -> float:
    """Leading variance constant (1 + mu_hat(4)**2) / 512, always in [1/512, 1/256]."""
    return float(c_n_exact(fs))


def B4_direct(fs: FrequencySet) -> Fraction:
    """Fourth moment of the cosine of the angle between two independent points.

    Computed as the double lattice sum of <l1, l2>**4 / (N**2 n**4) over
    integers, so the result is an exact rational.
    """
    pts = fs.points
    total = 0
    for a1, b1 in pts:
        for a2, b2 in pts:
            total += (a1 * a2 + b1 * b2) ** 4
    return Fraction(total, fs.N**2 * fs.n**4)


def nu_a_hat(a: float, k: int) -> float:
    """Fourier coefficient of the four-arc measure nu_a, a in [0, pi/4]."""
    if not 0 <= a <= math.pi / 4 + 1e-12:
        raise ValueError(f"a must lie in [0, pi/4], got {a}")
    if k == 0:
        return 1.0
    if k % 4:
        return 0.0
    if a == 0:
        return 1.0
    return math.sin(k * a) / (k * a)


@dataclass(frozen=True)
class SpectralSummary:
    n: int
    N: int
    mu_hat: dict
    c_n: float
    B4: float

    @property
    def mu4(self) -> float:
        return self.mu_hat[4]


def spectral_summary(fs: FrequencySet, ks: Iterable[int] = (0, 4, 8)) -> SpectralSummary:
    ks = sorted(set(ks) | {4})
    return SpectralSummary(
        n=fs.n,
        N=fs.N,
        mu_hat={k: mu_hat(fs, k) for k in ks},
        c_n=c_n(fs),
        B4=float(Fraction(3, 8) + mu_hat_exact(fs, 4) ** 2 / 8),
    )


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    N: int
    mu_hat: dict


def convergence_report(seq: EnergySequence | Iterable[int], k_list: Iterable[int] = (4,)) -> list[ConvergenceRow]:
    """Fourier coefficients of the spectral measure along a sequence of levels."""
    k_list = tuple(k_list)
    rows = []
    for n in seq:
        fs = enumerate_lambda(n)
        rows.append(ConvergenceRow(n=n, N=fs.N, mu_hat={k: mu_hat(fs, k) for k in k_list}))
    return rows
