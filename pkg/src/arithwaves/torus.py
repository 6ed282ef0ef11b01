"""Exact evaluation of integer-frequency trigonometric polynomials on torus grids.

A polynomial sum_lambda c_lambda exp(2 pi i <lambda, x>) evaluated at the
points (j/M, k/M) equals an inverse DFT of the coefficients reduced mod M,
for any M.  The grid mean of such a polynomial is its constant term as soon
as no nonzero frequency is a multiple of M in both coordinates, which holds
when M exceeds the largest absolute coordinate.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.fft

__all__ = ["trig_grid", "cos_grid", "exact_grid_size", "pairwise_mean"]


def _residues(points, M: int) -> tuple[np.ndarray, np.ndarray]:
    pts = np.asarray(points)
    if pts.dtype == object:
        p = np.array([int(a) % M for a in pts[:, 0]], dtype=np.int64)
        q = np.array([int(b) % M for b in pts[:, 1]], dtype=np.int64)
        return p, q
    pts = pts.astype(np.int64)
    return np.mod(pts[:, 0], M), np.mod(pts[:, 1], M)


def trig_grid(points, coeffs, M: int, shift: tuple[float, float] = (0.0, 0.0)) -> np.ndarray:
    """Evaluate sum_lambda c_lambda exp(2 pi i <lambda, x>) at x = (j/M, k/M) + shift.

    Returns the complex M x M array indexed [j, k].
    """
    p, q = _residues(points, M)
    c = np.asarray(coeffs, dtype=complex)
    if shift != (0.0, 0.0):
        pts = np.asarray(points, dtype=float)
        c = c * np.exp(2j * np.pi * (pts[:, 0] * shift[0] + pts[:, 1] * shift[1]))
    grid = np.zeros((M, M), dtype=complex)
    np.add.at(grid, (p, q), c)
    return scipy.fft.ifft2(grid, norm="forward")


def cos_grid(points, weights, M: int) -> np.ndarray:
    """Real grid values of sum_lambda w_lambda cos(2 pi <lambda, x>) for a symmetric set."""
    return trig_grid(points, weights, M).real


def exact_grid_size(max_freq: float, minimum: int = 8) -> int:
    """Smallest FFT-friendly M strictly larger than max_freq."""
    return scipy.fft.next_fast_len(max(minimum, math.floor(max_freq) + 1))


def pairwise_mean(values: np.ndarray) -> float:
    """Grid mean with a fixed reduction order, so results do not depend on threading."""
    return float(np.sum(np.asarray(values, dtype=float).ravel()) / values.size)
