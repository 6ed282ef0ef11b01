"""Sampling arithmetic random waves on torus grids and measuring nodal length."""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

from .lattice import FrequencySet
from .spectral import c_n, mu_hat
from .kacrice import variance_prediction
from .torus import trig_grid

__all__ = [
    "ExactZeroError",
    "ExperimentFailedError",
    "FieldGrid",
    "NodalExtraction",
    "ExperimentRecord",
    "default_grid",
    "trial_rng",
    "sample_field",
    "field_direct",
    "write_grid_csv",
    "nodal_length",
    "trial_length",
    "run_experiment",
    "variance_standard_error",
]

ABORT_FRACTION = 0.01


class ExactZeroError(ArithmeticError):
    """A grid value is exactly zero, so the sign pattern of a cell is undefined."""


class ExperimentFailedError(RuntimeError):
    """More than 1% of the trials were aborted."""


def default_grid(n: int, per_wavelength: int = 32) -> int:
    """per_wavelength * ceil(sqrt(n)) rounded up to a power of two."""
    root = math.isqrt(n)
    if root * root < n:
        root += 1
    return 1 << max(3, (per_wavelength * root - 1).bit_length())


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent stream for one trial, derived from (seed, trial) alone."""
    return np.random.default_rng(np.random.SeedSequence([seed, trial]))


@dataclass(frozen=True)
class FieldGrid:
    n: int
    M: int
    values: np.ndarray
    seed: int
    half_lattice: tuple[tuple[int, int], ...]
    coeffs: np.ndarray = field(repr=False)  # b + i c for each half-lattice point

    def evaluate_shifted(self, shift: tuple[float, float]) -> np.ndarray:
        """Exact field values on the grid translated by shift."""
        N = 2 * len(self.half_lattice)
        vals = trig_grid(self.half_lattice, self.coeffs, self.M, shift=shift).real
        return math.sqrt(2 / N) * vals


def _half_and_coeffs(fs: FrequencySet, rng: np.random.Generator, order=None):
    half = fs.half
    if order is not None:
        half = tuple(half[i] for i in order)
    z = rng.standard_normal((len(half), 2))
    return half, z[:, 0] + 1j * z[:, 1]


def sample_field(fs: FrequencySet, grid_M: int | None = None, seed: int = 0,
                 method: str = "fft", rng: np.random.Generator | None = None,
                 order=None) -> FieldGrid:
    """One realization of f = sqrt(2/N) sum_half (b cos(2 pi <l,x>) - c sin(2 pi <l,x>)).

    values[j, k] = f(j/M, k/M).  The coefficients come from rng when given,
    otherwise from default_rng(seed).  ``order`` permutes the half lattice
    before the coefficients are drawn.
    """
    M = default_grid(fs.n) if grid_M is None else grid_M
    if M <= 2 * fs.max_coordinate:
        raise ValueError(f"grid_M = {M} must exceed 2 max|l_i| = {2 * fs.max_coordinate}")
    rng = np.random.default_rng(seed) if rng is None else rng
    half, coeffs = _half_and_coeffs(fs, rng, order)
    if method == "fft":
        values = math.sqrt(2 / fs.N) * trig_grid(half, coeffs, M).real
    elif method == "direct":
        values = field_direct(half, coeffs, M, fs.N)
    else:
        raise ValueError(f"unknown method {method!r}")
    return FieldGrid(fs.n, M, values, seed, half, coeffs)


def field_direct(half, coeffs, M: int, N: int) -> np.ndarray:
    """Direct summation of the field over the grid, one frequency at a time."""
    g = np.arange(M) / M
    out = np.zeros((M, M))
    for (a, b), c in zip(half, coeffs):
        ph = 2 * np.pi * (a * g[:, None] + b * g[None, :])
        out += c.real * np.cos(ph) - c.imag * np.sin(ph)
    return math.sqrt(2 / N) * out


def write_grid_csv(grid: FieldGrid, fh: TextIO) -> None:
    """Row-major CSV: a header line with n, M, seed, then M rows of M values."""
    w = csv.writer(fh)
    w.writerow(["n", grid.n, "M", grid.M, "seed", grid.seed])
    for row in grid.values:
        w.writerow([repr(float(v)) for v in row])


@dataclass(frozen=True)
class NodalExtraction:
    segments: np.ndarray  # (k, 2, 2) endpoint pairs in [0, 1)^2
    total_length: float
    cell_flags: int


def _crossings(values: np.ndarray, center: np.ndarray | None):
    M = values.shape[0]
    v00 = values
    v10 = np.roll(values, -1, axis=0)
    v01 = np.roll(values, -1, axis=1)
    v11 = np.roll(v10, -1, axis=1)
    j = np.arange(M, dtype=float)[:, None]
    k = np.arange(M, dtype=float)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        tb = v00 / (v00 - v10)
        tt = v01 / (v01 - v11)
        tl = v00 / (v00 - v01)
        tr = v10 / (v10 - v11)
    s00, s10, s01, s11 = v00 > 0, v10 > 0, v01 > 0, v11 > 0
    cb, ct, cl, cr = s00 != s10, s01 != s11, s00 != s01, s10 != s11
    # edge points in grid units; x1 runs along axis 0, x2 along axis 1
    pts = {
        "b": (j + tb, np.broadcast_to(k, tb.shape)),
        "t": (j + tt, np.broadcast_to(k + 1, tt.shape)),
        "l": (np.broadcast_to(j, tl.shape), k + tl),
        "r": (np.broadcast_to(j + 1, tr.shape), k + tr),
    }
    flags = {"b": cb, "t": ct, "l": cl, "r": cr}
    saddle = cb & ct & cl & cr
    pairs = []
    for p, q in (("b", "t"), ("l", "r"), ("b", "l"), ("b", "r"), ("t", "l"), ("t", "r")):
        pairs.append((p, q, flags[p] & flags[q] & ~saddle))
    if saddle.any():
        if center is None:
            raise ValueError("saddle cells need the exact cell-centre values")
        # centre shares the sign of v00: the v00-v11 diagonal is connected, cut off v10 and v01
        joined = (center > 0) == s00
        pairs += [
            ("b", "r", saddle & joined), ("l", "t", saddle & joined),
            ("b", "l", saddle & ~joined), ("t", "r", saddle & ~joined),
        ]
    return pts, pairs, saddle


def nodal_length(grid: FieldGrid, segments: bool = True) -> NodalExtraction:
    """Marching squares on the periodic grid; saddles resolved by the exact centre value."""
    values = grid.values
    if np.any(values == 0):
        raise ExactZeroError("exact zero on the grid")
    M = grid.M
    s = values > 0
    saddle_any = np.any(
        (s != np.roll(s, -1, 0)) & (s != np.roll(s, -1, 1)) & (s == np.roll(np.roll(s, -1, 0), -1, 1))
    )
    center = grid.evaluate_shifted((0.5 / M, 0.5 / M)) if saddle_any else None
    pts, pairs, saddle = _crossings(values, center)
    total = 0.0
    segs = []
    for p, q, mask in pairs:
        if not mask.any():
            continue
        x1p, x2p = pts[p][0][mask], pts[p][1][mask]
        x1q, x2q = pts[q][0][mask], pts[q][1][mask]
        total += float(np.sum(np.hypot(x1p - x1q, x2p - x2q)))
        if segments:
            segs.append(np.stack([np.stack([x1p, x2p], -1), np.stack([x1q, x2q], -1)], 1))
    seg_arr = (np.mod(np.concatenate(segs) / M, 1.0) if segs else np.empty((0, 2, 2)))
    return NodalExtraction(seg_arr, total / M, int(saddle.sum()))


def trial_length(fs: FrequencySet, grid_M: int, seed: int, trial: int) -> float:
    """Nodal length of the realization for one (seed, trial) pair."""
    grid = sample_field(fs, grid_M, seed, rng=trial_rng(seed, trial))
    return nodal_length(grid, segments=False).total_length


def variance_standard_error(x: np.ndarray) -> float:
    """Standard error of the unbiased sample variance from the fourth central moment."""
    T = len(x)
    d = x - x.mean()
    s2 = float(d @ d) / (T - 1)
    m4 = float(np.mean(d**4))
    return math.sqrt(max(m4 - s2**2 * (T - 3) / (T - 1), 0.0) / T)


@dataclass(frozen=True)
class ExperimentRecord:
    n: int
    N: int
    E: float
    seed: int
    trials: int
    grid_M: int
    sample_mean_L: float
    sample_var_L: float
    se_mean: float
    se_var: float
    theory_mean: float
    theory_var_leading: float
    mu4: float
    c_n: float
    aborted: tuple = ()
    wall_time: float = 0.0

    @property
    def var_ratio(self) -> float:
        """sample_var N^2 / (c_n E)."""
        return self.sample_var_L / self.theory_var_leading


def run_experiment(fs: FrequencySet, trials: int, grid_M: int | None = None, seed: int = 0,
                   threads: int = 1) -> ExperimentRecord:
    """Monte Carlo mean and variance of the nodal length.

    Trial i uses the stream trial_rng(seed, i), so the outcome does not
    depend on the thread count.
    """
    if trials < 2:
        raise ValueError("need at least two trials")
    M = default_grid(fs.n) if grid_M is None else grid_M
    start = time.perf_counter()

    def one(i):
        try:
            return trial_length(fs, M, seed, i)
        except ExactZeroError:
            return math.nan

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            lengths = np.array(list(pool.map(one, range(trials))))
    else:
        lengths = np.array([one(i) for i in range(trials)])
    aborted = tuple(int(i) for i in np.flatnonzero(np.isnan(lengths)))
    if len(aborted) > ABORT_FRACTION * trials:
        raise ExperimentFailedError(f"{len(aborted)} of {trials} trials aborted")
    ok = lengths[~np.isnan(lengths)]
    mean = float(ok.mean())
    var = float(np.var(ok, ddof=1))
    pred = variance_prediction(fs)
    return ExperimentRecord(
        n=fs.n, N=fs.N, E=fs.E, seed=seed, trials=trials, grid_M=M,
        sample_mean_L=mean, sample_var_L=var,
        se_mean=math.sqrt(var / len(ok)), se_var=variance_standard_error(ok),
        theory_mean=pred.mean_L, theory_var_leading=pred.var_L,
        mu4=mu_hat(fs, 4), c_n=c_n(fs), aborted=aborted,
        wall_time=time.perf_counter() - start,
    )
