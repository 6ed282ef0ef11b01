"""Exact identity checks that tie lattice counts to grid quadrature."""

from __future__ import annotations

from fractions import Fraction
from typing import NamedTuple

import numpy as np

from .correlations import (
    S6_CAP, CapExceededError, count_s4, count_s4_bruteforce, count_s6, grid_moment,
)
from .kacrice import LEMMA_PARTS, jet_arrays, lemma_check
from .lattice import FrequencySet, enumerate_lambda, r2
from .spectral import B4_direct, mu_hat_exact
from .torus import exact_grid_size

__all__ = ["IdentityResult", "run_identities", "identity_levels"]


class IdentityResult(NamedTuple):
    n: int
    name: str
    status: str  # PASS, FAIL or SKIP
    detail: str = ""


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def identity_levels(n_max: int, N_max: int) -> list[int]:
    """Every n <= n_max that is a sum of two squares with r2(n) <= N_max."""
    return [n for n in range(1, n_max + 1) if 0 < r2(n) <= N_max]


def run_identities(n: int | FrequencySet, cap: int = S6_CAP, points: int = 100, seed: int = 0,
                   brute_force_limit: int = 16, lemmas: bool = False) -> list[IdentityResult]:
    """Exact identities for one level; cap violations give SKIP entries.

    Checks the second, fourth and sixth moments of r against their lattice
    counts, the closed form of S_4, the fourth-moment identity for B_4 and
    the Laplace identity tr H = -E r.  With ``lemmas`` the torus-integral
    suite of :func:`lemma_check` is appended.
    """
    fs = n if isinstance(n, FrequencySet) else enumerate_lambda(n)
    n, N = fs.n, fs.N
    out = []

    def add(name, ok, detail=""):
        out.append(IdentityResult(n, name, "PASS" if ok else "FAIL", detail))

    q2 = grid_moment(fs, 2, exact_grid_size(2 * fs.max_coordinate), absolute=False)
    add("r2_count_vs_quadrature", abs(q2 - 1 / N) <= 1e-10, f"quad={q2!r} exact=1/{N}")

    s4 = count_s4(fs)
    if N <= brute_force_limit:
        bf = count_s4_bruteforce(fs)
        add("s4_closed_form_bruteforce", bf == s4 == 3 * N * N - 3 * N, f"{bf} vs {s4}")
    q4 = grid_moment(fs, 4, exact_grid_size(4 * fs.max_coordinate), absolute=False)
    add("s4_moment_duality", _rel(q4, s4 / N**4) <= 1e-10, f"quad={q4!r}")

    if N > cap:
        out.append(IdentityResult(n, "s6_moment_duality", "SKIP", f"N = {N} > cap {cap}"))
    else:
        s6 = count_s6(fs, cap)
        q6 = grid_moment(fs, 6, exact_grid_size(6 * fs.max_coordinate), absolute=False)
        add("s6_moment_duality", _rel(q6, s6 / N**6) <= 1e-9, f"R6={s6 / N**6!r} quad={q6!r}")

    b4 = B4_direct(fs)
    target = Fraction(3, 8) + mu_hat_exact(fs, 4) ** 2 / 8
    add("B4_identity", abs(float(b4 - target)) <= 1e-12, f"B4={b4} target={target}")

    xs = np.random.default_rng(seed).random((points, 2))
    r, _, H = jet_arrays(fs, xs)
    # relative to E, the size of the Hessian entries
    err = np.abs(H[:, 0, 0] + H[:, 1, 1] + fs.E * r) / fs.E
    add("laplace_identity", bool(np.all(err <= 1e-10)), f"max rel err {float(err.max()):.2e}")

    if lemmas:
        for which in LEMMA_PARTS:
            try:
                chk = lemma_check(fs, which, cap=cap)
            except CapExceededError as exc:
                out.append(IdentityResult(n, f"lemma_{which}", "SKIP", str(exc)))
                continue
            add(f"lemma_{which}", chk.passed,
                f"exact={chk.exact:.6e} quad={chk.quadrature:.6e} ref={chk.reference:.6e}")
    return out
