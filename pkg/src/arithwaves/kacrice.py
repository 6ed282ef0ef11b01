"""Two-point analytics of the nodal length: covariance jets, the scaled
conditional covariance, the correlation function K2, and the lattice-sum
identities that control its torus integral.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, NamedTuple

import numpy as np

from .correlations import S6_CAP, CapExceededError, count_s6
from .lattice import FrequencySet
from .spectral import c_n, mu_hat
from .torus import exact_grid_size, trig_grid

__all__ = [
    "DegenerateCovarianceError",
    "NotPositiveDefiniteError",
    "CovarianceJet",
    "ScaledPerturbation",
    "SingularSetReport",
    "VariancePrediction",
    "LemmaCheck",
    "LEMMA_PARTS",
    "SINGULAR_CHEBYSHEV_C",
    "TAYLOR_ENVELOPE_C",
    "covariance_jet",
    "jet_arrays",
    "jet_grids",
    "perturbation",
    "perturbation_arrays",
    "half_line_integral",
    "K2_exact",
    "K2_exact_arrays",
    "K2_monte_carlo",
    "K2_taylor",
    "K2_taylor_arrays",
    "berry_f_direct",
    "berry_f_block",
    "berry_cancellation_v",
    "berry_v_lattice",
    "lemma_integral_suite",
    "lemma_check",
    "singular_set",
    "singular_grid_minimum",
    "variance_prediction",
    "variance_error_scale",
    "taylor_envelope_ratios",
    "degenerate_points",
    "VarianceIntegral",
    "kac_rice_variance",
]

DEGENERACY_THRESHOLD = 1e-10
PD_THRESHOLD = 1e-12
K2_TOL = 1e-8
K2_START_NODES = 96
K2_MAX_NODES = 3072

# Calibrated on n = 65 and 325 (1000 points each, seed 1): the largest
# ratio |K2 - K2_taylor| / (r^6 + |X|^3 + |Y|^6) seen was 0.0157.
TAYLOR_ENVELOPE_C = 0.02

# On a singular square |r| >= 5/16 throughout, so meas(B) (5/16)^6 <= R6.
SINGULAR_CHEBYSHEV_C = (16 / 5) ** 6


class DegenerateCovarianceError(ArithmeticError):
    """1 - r^2 is too small for the conditioning on f(0) = f(x) = 0."""


class NotPositiveDefiniteError(ArithmeticError):
    """The scaled covariance matrix has a non-positive eigenvalue."""


# ---------------------------------------------------------------------------
# covariance function and its derivatives


@dataclass(frozen=True)
class CovarianceJet:
    x: tuple[float, float]
    r: float
    D: np.ndarray
    H: np.ndarray


def _phases(fs: FrequencySet, xs: np.ndarray) -> np.ndarray:
    lam = fs.array.astype(float)
    return 2 * np.pi * (xs @ lam.T)


def jet_arrays(fs: FrequencySet, xs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """r, D, H at an array of points xs with shape (m, 2)."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    lam = fs.array.astype(float)
    ph = _phases(fs, xs)
    c, s = np.cos(ph), np.sin(ph)
    N = fs.N
    r = c.mean(axis=1)
    D = -(2 * np.pi / N) * (s @ lam)
    outer = lam[:, :, None] * lam[:, None, :]
    H = -(4 * np.pi**2 / N) * np.einsum("ml,lij->mij", c, outer)
    return r, D, H


def covariance_jet(fs: FrequencySet, x) -> CovarianceJet:
    """r(x), its gradient D(x) and Hessian H(x)."""
    x = tuple(float(v) for v in x)
    r, D, H = jet_arrays(fs, np.array([x]))
    return CovarianceJet(x=x, r=float(r[0]), D=D[0], H=H[0])


def jet_grids(fs: FrequencySet, M: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """r, D, H on the M x M grid (j/M, k/M), evaluated exactly by FFT.

    Shapes are (M, M), (M, M, 2) and (M, M, 2, 2).
    """
    lam = fs.array.astype(float)
    N = fs.N
    base = np.full(N, 1.0 / N)
    r = trig_grid(fs.points, base, M).real
    D = np.empty((M, M, 2))
    for i in range(2):
        D[..., i] = trig_grid(fs.points, 2j * np.pi * lam[:, i] / N, M).real
    H = np.empty((M, M, 2, 2))
    for i in range(2):
        for j in range(i, 2):
            H[..., i, j] = trig_grid(fs.points, -4 * np.pi**2 * lam[:, i] * lam[:, j] / N, M).real
            H[..., j, i] = H[..., i, j]
    return r, D, H


# ---------------------------------------------------------------------------
# scaled conditional covariance


@dataclass(frozen=True)
class ScaledPerturbation:
    X: np.ndarray
    Y: np.ndarray
    omega: np.ndarray


def perturbation_arrays(r, D, H, E: float, one_minus_r2=None) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized X and Y from arrays of r (m,), D (m, 2), H (m, 2, 2).

    one_minus_r2 may be supplied when it is known more accurately than 1 - r**2.
    """
    r = np.asarray(r, dtype=float)
    one_minus = 1 - r**2 if one_minus_r2 is None else np.asarray(one_minus_r2, dtype=float)
    if np.any(one_minus < DEGENERACY_THRESHOLD):
        raise DegenerateCovarianceError("1 - r^2 below threshold; conditioning is degenerate")
    DtD = D[..., :, None] * D[..., None, :]
    X = -(2 / (E * one_minus))[..., None, None] * DtD
    Y = -(2 / E) * (H + (r / one_minus)[..., None, None] * DtD)
    return X, Y


def perturbation(jet: CovarianceJet, E: float) -> ScaledPerturbation:
    """X, Y and Omega = I + [[X, Y], [Y, X]] at one point."""
    X, Y = perturbation_arrays(np.array([jet.r]), jet.D[None], jet.H[None], E)
    X, Y = X[0], Y[0]
    omega = np.eye(4) + np.block([[X, Y], [Y, X]])
    return ScaledPerturbation(X=X, Y=Y, omega=omega)


def _check_pd(X: np.ndarray, Y: np.ndarray) -> None:
    # eigenvalues of [[I+X, Y], [Y, I+X]] are those of I+X+Y and I+X-Y
    lo = min(np.linalg.eigvalsh(np.eye(2) + X + Y)[0], np.linalg.eigvalsh(np.eye(2) + X - Y)[0])
    if lo <= PD_THRESHOLD:
        raise NotPositiveDefiniteError(f"smallest eigenvalue of Omega is {lo:.3e}")


# ---------------------------------------------------------------------------
# Berry's integral representation of E|V1||V2|
#
# With t = tan(phi)^2 one has dt / t^(3/2) = 2 dphi / sin(phi)^2, which turns
# the half-line integrals below into smooth integrals over [0, pi/2].


def _gauss(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(nodes)
    phi = (x + 1) * (np.pi / 4)
    return phi, w * (np.pi / 4)


def half_line_integral(h: Callable[[np.ndarray], np.ndarray], tol: float = K2_TOL,
                       start: int = K2_START_NODES, max_nodes: int = K2_MAX_NODES) -> float:
    """Integral of h(t) t^(-3/2) over (0, inf) with node doubling until tol."""
    prev = None
    nodes = start
    while nodes <= max_nodes:
        phi, w = _gauss(nodes)
        t = np.tan(phi) ** 2
        val = float(np.sum(w * h(t) * 2 / np.sin(phi) ** 2))
        if prev is not None and abs(val - prev) <= tol * max(1.0, abs(val)):
            return val
        prev, nodes = val, 2 * nodes
    raise ArithmeticError(f"half-line integral did not reach tolerance {tol}")


def _sym2(M: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return M[..., 0, 0], M[..., 0, 1], M[..., 1, 1]


def _tan_rule(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    phi, w = _gauss(nodes)
    return np.tan(phi) ** 2, w * 2 / np.sin(phi) ** 2


def _log_rule(step: float, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    """Trapezoid nodes in u = log t; dt / t^(3/2) = exp(-u/2) du."""
    u = np.arange(lo, hi + step / 2, step)
    return np.exp(u), step * np.exp(-u / 2)


def _split_logdet(P: np.ndarray, Mn: np.ndarray, t: np.ndarray) -> np.ndarray:
    """log det(I + M) on the (t, s) grid from the sum and difference covariances.

    In the basis ((V1 + V2), (V1 - V2)) / sqrt(2) the covariance is
    diag(P, Mn) with P = A + Y, Mn = A - Y, and
    det(I + M) = det(I + sigma P) det(I + Mn K), K = (I + sigma P)^-1 (sigma + ts P),
    sigma = (t + s)/2.  Every term is non-negative, so nothing cancels when
    Omega is nearly singular.
    """
    p, U = np.linalg.eigh(P)  # (m, 2), (m, 2, 2)
    Mr = np.einsum("mji,mjk,mkl->mil", U, Mn, U)
    sig = (t[:, None] + t[None, :]) / 2
    ts = t[:, None] * t[None, :]
    K1 = (sig + ts * p[:, 0, None, None]) / (1 + sig * p[:, 0, None, None])
    K2 = (sig + ts * p[:, 1, None, None]) / (1 + sig * p[:, 1, None, None])
    detM = Mr[:, 0, 0] * Mr[:, 1, 1] - Mr[:, 0, 1] ** 2
    inner = Mr[:, 0, 0, None, None] * K1 + Mr[:, 1, 1, None, None] * K2 + np.maximum(detM, 0)[:, None, None] * K1 * K2
    return (np.log1p(sig * p[:, 0, None, None]) + np.log1p(sig * p[:, 1, None, None])
            + np.log1p(inner))


def _berry_sum(X: np.ndarray, Y: np.ndarray, nodes: int | None = None, rule=None,
               split: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    """Tensor-rule estimate of the double integral of g(t,s)/(ts)^(3/2), per point.

    g = 1 - f(t,0) - f(0,s) + f(t,s) is evaluated as
    (1 - a)(1 - b) + a b expm1(-kappa/2) where a = f(t,0), b = f(0,s) and
    kappa = log det(I - W) with W = st (I+sA)^-1 Y (I+tA)^-1 Y, A = I + X.
    Every piece is a log1p/expm1 of a small quantity, so the O(ts) size of g
    is resolved without cancellation.  When Omega is nearly singular,
    det(I - W) itself can be tiny; ``split`` = (A + Y, A - Y) then supplies a
    cancellation-free log det(I + M) for the nodes where det(I - W) < 1e-3.
    """
    t, jac = _tan_rule(nodes) if rule is None else rule
    a11, a12, a22 = _sym2(np.eye(2) + X)
    y11, y12, y22 = _sym2(Y)
    trA, detA, detY = a11 + a22, a11 * a22 - a12 * a12, y11 * y22 - y12 * y12
    tt = t[None, :]
    lt = np.log1p(tt * trA[:, None] + tt**2 * detA[:, None])  # (m, n)
    det_t = np.exp(lt)
    one_minus_a = -np.expm1(-lt / 2)
    a = np.exp(-lt / 2)
    # P(t) = Y adj(I + tA) Y, adj = [[1 + t a22, -t a12], [-t a12, 1 + t a11]]
    b11 = 1 + tt * a22[:, None]
    b12 = -tt * a12[:, None]
    b22 = 1 + tt * a11[:, None]
    Y11, Y12, Y22 = y11[:, None], y12[:, None], y22[:, None]
    q11 = b11 * Y11 + b12 * Y12
    q12 = b11 * Y12 + b12 * Y22
    q21 = b12 * Y11 + b22 * Y12
    q22 = b12 * Y12 + b22 * Y22
    p11 = Y11 * q11 + Y12 * q21
    p12 = Y11 * q12 + Y12 * q22
    p22 = Y12 * q12 + Y22 * q22
    alpha = p11 + p22
    beta = a22[:, None] * p11 + a11[:, None] * p22 - 2 * a12[:, None] * p12
    # s-dependent pieces reuse the t-grid because both axes share the rule
    ss = t[None, None, :]
    trW = (tt[:, :, None] * ss) * (alpha[:, :, None] + ss * beta[:, :, None])
    trW = trW / (det_t[:, :, None] * det_t[:, None, :])
    detW = (tt[:, :, None] * ss) ** 2 * (detY**2)[:, None, None] / (det_t[:, :, None] * det_t[:, None, :])
    q = -trW + detW
    with np.errstate(invalid="ignore", divide="ignore"):
        kappa = np.log1p(q)
    if split is not None:
        far = q < -1 + 1e-3
        if far.any():
            robust = _split_logdet(split[0], split[1], t) - lt[:, :, None] - lt[:, None, :]
            kappa = np.where(far, robust, kappa)
    g = one_minus_a[:, :, None] * one_minus_a[:, None, :] + a[:, :, None] * a[:, None, :] * np.expm1(-kappa / 2)
    return np.einsum("mij,i,j->m", g, jac, jac)


def _expected_norm_product(X: np.ndarray, Y: np.ndarray, tol: float = K2_TOL,
                           start: int = K2_START_NODES, max_nodes: int = K2_MAX_NODES,
                           batch: int = 16) -> np.ndarray:
    """E|V1||V2| for arrays of X, Y of shape (m, 2, 2), node count doubled until tol."""
    X = np.asarray(X, dtype=float).reshape(-1, 2, 2)
    Y = np.asarray(Y, dtype=float).reshape(-1, 2, 2)
    out = np.empty(len(X))
    for lo in range(0, len(X), batch):
        sl = slice(lo, lo + batch)
        Xb, Yb = X[sl], Y[sl]
        prev = _berry_sum(Xb, Yb, start)
        nodes = 2 * start
        todo = np.arange(len(Xb))
        result = np.empty(len(Xb))
        while True:
            cur = _berry_sum(Xb[todo], Yb[todo], nodes)
            done = np.abs(cur - prev) <= tol * np.maximum(1.0, np.abs(cur))
            result[todo[done]] = cur[done]
            todo, prev = todo[~done], cur[~done]
            if len(todo) == 0:
                break
            nodes *= 2
            if nodes > max_nodes:
                raise ArithmeticError(f"K2 quadrature did not converge with {max_nodes} nodes")
        out[sl] = result / (2 * np.pi)
    return out


def K2_exact_arrays(X, Y, r, check: bool = True, **kw) -> np.ndarray:
    """Vectorized K2 = E|V1||V2| / (2 pi sqrt(1 - r^2))."""
    X = np.asarray(X, dtype=float).reshape(-1, 2, 2)
    Y = np.asarray(Y, dtype=float).reshape(-1, 2, 2)
    r = np.asarray(r, dtype=float).reshape(-1)
    if np.any(1 - r**2 < DEGENERACY_THRESHOLD):
        raise DegenerateCovarianceError("1 - r^2 below threshold")
    if check:
        for Xi, Yi in zip(X, Y):
            _check_pd(Xi, Yi)
    return _expected_norm_product(X, Y, **kw) / (2 * np.pi * np.sqrt(1 - r**2))


def K2_exact(pert: ScaledPerturbation, r: float, **kw) -> float:
    """Scaled two-point correlation from Berry's double-integral representation."""
    return float(K2_exact_arrays(pert.X[None], pert.Y[None], np.array([r]), **kw)[0])


def K2_monte_carlo(pert: ScaledPerturbation, r: float, draws: int = 10**6,
                   seed: int = 0, chunk: int = 250_000) -> tuple[float, float]:
    """Monte Carlo K2 and its standard error, sampling via the symmetric square root."""
    _check_pd(pert.X, pert.Y)
    vals, vecs = np.linalg.eigh(pert.omega)
    root = (vecs * np.sqrt(vals)) @ vecs.T
    rng = np.random.default_rng(seed)
    total = total_sq = 0.0
    left = draws
    while left:
        m = min(chunk, left)
        V = rng.standard_normal((m, 4)) @ root
        prod = np.hypot(V[:, 0], V[:, 1]) * np.hypot(V[:, 2], V[:, 3])
        total += prod.sum()
        total_sq += (prod**2).sum()
        left -= m
    mean = total / draws
    var = (total_sq - draws * mean**2) / (draws - 1)
    scale = 1 / (2 * np.pi * math.sqrt(1 - r**2))
    return mean * scale, math.sqrt(var / draws) * scale


def berry_f_direct(omega: np.ndarray, t: float, s: float) -> float:
    """det(I + Q^(1/2) Omega Q^(1/2))^(-1/2) with Q = diag(t, t, s, s), by a 4x4 determinant."""
    q = np.sqrt(np.array([t, t, s, s]))
    return float(np.linalg.det(np.eye(4) + q[:, None] * omega * q[None, :]) ** -0.5)


def berry_f_block(X: np.ndarray, Y: np.ndarray, t: float, s: float) -> float:
    """The same quantity through the Schur complement of the (1,1) block."""
    I = np.eye(2)
    T = (1 + t) * I + t * X
    S = (1 + s) * I + s * X - s * t * Y @ np.linalg.solve(T, Y)
    return float((np.linalg.det(T) * np.linalg.det(S)) ** -0.5)


# ---------------------------------------------------------------------------
# Taylor expansion of K2


def K2_taylor_arrays(X, Y, r) -> np.ndarray:
    X = np.asarray(X, dtype=float).reshape(-1, 2, 2)
    Y = np.asarray(Y, dtype=float).reshape(-1, 2, 2)
    r = np.asarray(r, dtype=float).reshape(-1)
    Y2 = Y @ Y
    trX = np.trace(X, axis1=1, axis2=2)
    trY2 = np.trace(Y2, axis1=1, axis2=2)
    trXY2 = np.einsum("mij,mji->m", X, Y2)
    trX2 = np.einsum("mij,mji->m", X, X)
    trY4 = np.einsum("mij,mji->m", Y2, Y2)
    r2 = r**2
    L2 = 0.25 * (
        r2 / 2
        + trX / 2
        + trY2 / 8
        + 3 * r2**2 / 8
        - trXY2 / 16
        - trX2 / 32
        + trY4 / 256
        + trY2**2 / 512
        - trX * trY2 / 32
        + r2 * trX / 4
        + r2 * trY2 / 16
    )
    return 0.25 + L2


def K2_taylor(pert: ScaledPerturbation, r: float) -> float:
    """1/4 + L2, the intermediate-range expansion of K2."""
    return float(K2_taylor_arrays(pert.X[None], pert.Y[None], np.array([r]))[0])


def taylor_envelope_ratios(fs: FrequencySet, points: int = 1000, seed: int = 0,
                           r_max: float = 5 / 16) -> dict:
    """|K2_exact - K2_taylor| / (r^6 + |X|^3 + |Y|^6) at uniformly drawn nonsingular points.

    Points with |r| > r_max are redrawn, so the sample stays in the regime
    where the expansion is meant to hold.
    """
    rng = np.random.default_rng(seed)
    xs = np.empty((0, 2))
    while len(xs) < points:
        cand = rng.random((2 * points, 2))
        r, _, _ = jet_arrays(fs, cand)
        xs = np.vstack([xs, cand[np.abs(r) <= r_max]])
    xs = xs[:points]
    r, D, H = jet_arrays(fs, xs)
    X, Y = perturbation_arrays(r, D, H, fs.E)
    exact = K2_exact_arrays(X, Y, r)
    taylor = K2_taylor_arrays(X, Y, r)
    proxy = r**6 + np.linalg.norm(X, axis=(1, 2)) ** 3 + np.linalg.norm(Y, axis=(1, 2)) ** 6
    err = np.abs(exact - taylor)
    return {"xs": xs, "r": r, "exact": exact, "taylor": taylor, "error": err,
            "proxy": proxy, "ratio": err / proxy}


# ---------------------------------------------------------------------------
# Berry cancellation


def berry_cancellation_v(fs: FrequencySet, x) -> float:
    """v(x) = r^2 - (2/E) D D^t + tr(H^2) / E^2."""
    jet = covariance_jet(fs, x)
    E = fs.E
    return float(jet.r**2 - (2 / E) * jet.D @ jet.D + np.trace(jet.H @ jet.H) / E**2)


def berry_v_lattice(fs: FrequencySet, x) -> float:
    """v(x) as (4/N^2) sum over pairs of cos^4(theta/2) cos(2 pi <l1 + l2, x>)."""
    lam = fs.array.astype(float)
    x = np.asarray(x, dtype=float)
    cos_theta = (lam @ lam.T) / fs.n
    ph = 2 * np.pi * (lam @ x)
    cos_sum = np.cos(ph[:, None] + ph[None, :])
    return float(4 / fs.N**2 * np.sum(((1 + cos_theta) / 2) ** 2 * cos_sum))


# ---------------------------------------------------------------------------
# lattice-sum identities for torus integrals of r, D, H


def _zero_sum_pairs(fs: FrequencySet) -> np.ndarray:
    """Index pairs (i, j) with l_i + l_j = 0."""
    index = {p: i for i, p in enumerate(fs.points)}
    return np.array([(i, index[(-a, -b)]) for i, (a, b) in enumerate(fs.points)], dtype=np.int64)


def _zero_sum_quadruples(fs: FrequencySet) -> np.ndarray:
    """All index quadruples in S_4, generated from the three pairings."""
    neg = _zero_sum_pairs(fs)[:, 1]
    N = fs.N
    a, b = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    a, b = a.ravel(), b.ravel()
    quads = np.concatenate([
        np.stack([a, neg[a], b, neg[b]], axis=1),
        np.stack([a, b, neg[a], neg[b]], axis=1),
        np.stack([a, b, neg[b], neg[a]], axis=1),
    ])
    return np.unique(quads, axis=0)


def _zero_sum_sextuples(fs: FrequencySet, cap: int = S6_CAP) -> np.ndarray:
    """All index 6-tuples in S_6: triples grouped by their sum, paired with negated sums."""
    if fs.N > cap:
        raise CapExceededError(f"N = {fs.N} exceeds the S_6 cap {cap}")
    A = fs.array.astype(np.int64)
    N = fs.N
    idx = np.stack(np.meshgrid(np.arange(N), np.arange(N), np.arange(N), indexing="ij"), -1).reshape(-1, 3)
    sums = A[idx[:, 0]] + A[idx[:, 1]] + A[idx[:, 2]]
    bound = 3 * fs.max_coordinate
    width = 2 * bound + 1
    key = (sums[:, 0] + bound) * width + (sums[:, 1] + bound)
    neg_key = (-sums[:, 0] + bound) * width + (-sums[:, 1] + bound)
    order = np.argsort(key, kind="stable")
    sk = key[order]
    uniq, start, counts = np.unique(sk, return_index=True, return_counts=True)
    pos = np.searchsorted(uniq, neg_key)
    first = start[pos]
    cnt = counts[pos]
    left = np.repeat(np.arange(len(idx)), cnt)
    offs = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    right = order[np.repeat(first, cnt) + offs]
    return np.concatenate([idx[left], idx[right]], axis=1)


def _inner(fs: FrequencySet, tuples: np.ndarray, i: int, j: int) -> np.ndarray:
    pts = fs.array.astype(object) if fs.n ** 6 * len(tuples) >= 2**62 else fs.array.astype(np.int64)
    li, lj = pts[tuples[:, i]], pts[tuples[:, j]]
    return li[:, 0] * lj[:, 0] + li[:, 1] * lj[:, 1]


def _tensor_sum(fs: FrequencySet, tuples: np.ndarray, weight) -> int:
    w = weight(lambda i, j: _inner(fs, tuples, i, j))
    return int(sum(int(v) for v in w)) if w.dtype == object else int(w.sum())


@dataclass(frozen=True)
class _Part:
    label: str
    k: int  # number of lattice factors, fixes the zero-sum set and the grid degree
    weight: Callable
    prefactor: Callable[[float], float]  # pi-power factor before 1/N^k
    leading: Callable  # (E, N, mu4) -> leading term, or None for bound-type parts
    energy_power: int
    integrand: Callable  # (r, D, H, E) on grids -> values


def _tr(A):
    return np.trace(A, axis1=-2, axis2=-1)


def _dd(D):
    return np.einsum("...i,...i->...", D, D)


LEMMA_PARTS: dict[str, _Part] = {
    "r2": _Part("int r^2", 2, lambda g: g(0, 0) * 0 + 1, lambda: 1.0,
                lambda E, N, m: 1 / N, 0, lambda r, D, H, E: r**2),
    "r4": _Part("int r^4", 4, lambda g: g(0, 0) * 0 + 1, lambda: 1.0,
                lambda E, N, m: 3 / N**2, 0, lambda r, D, H, E: r**4),
    "DDt": _Part("int D D^t", 2, lambda g: g(0, 1), lambda: -4 * np.pi**2,
                 lambda E, N, m: E / N, 1, lambda r, D, H, E: _dd(D)),
    "DDt2": _Part("int (D D^t)^2", 4, lambda g: g(0, 1) * g(2, 3), lambda: 16 * np.pi**4,
                  lambda E, N, m: 2 * E**2 / N**2, 2, lambda r, D, H, E: _dd(D) ** 2),
    "r2DDt": _Part("int r^2 D D^t", 4, lambda g: g(2, 3), lambda: -4 * np.pi**2,
                   lambda E, N, m: E / N**2, 1, lambda r, D, H, E: r**2 * _dd(D)),
    "trH2": _Part("int tr H^2", 2, lambda g: g(0, 1) ** 2, lambda: 16 * np.pi**4,
                  lambda E, N, m: E**2 / N, 2, lambda r, D, H, E: _tr(H @ H)),
    "r2trH2": _Part("int r^2 tr H^2", 4, lambda g: g(2, 3) ** 2, lambda: 16 * np.pi**4,
                    lambda E, N, m: 2 * E**2 / N**2, 2, lambda r, D, H, E: r**2 * _tr(H @ H)),
    "trH4": _Part("int tr H^4", 4, lambda g: g(0, 1) * g(1, 2) * g(2, 3) * g(3, 0),
                  lambda: (4 * np.pi**2) ** 4,
                  lambda E, N, m: E**4 * (11 + m**2) / (8 * N**2), 4,
                  lambda r, D, H, E: _tr(H @ H @ H @ H)),
    "trH2sq": _Part("int (tr H^2)^2", 4, lambda g: g(0, 1) ** 2 * g(2, 3) ** 2,
                    lambda: (4 * np.pi**2) ** 4,
                    lambda E, N, m: E**4 * (7 + m**2) / (4 * N**2), 4,
                    lambda r, D, H, E: _tr(H @ H) ** 2),
    "DDt_trH2": _Part("int D D^t tr H^2", 4, lambda g: g(0, 1) * g(2, 3) ** 2,
                      lambda: -64 * np.pi**6, lambda E, N, m: E**3 / N**2, 3,
                      lambda r, D, H, E: _dd(D) * _tr(H @ H)),
    "rDHDt": _Part("int r D H D^t", 4, lambda g: g(1, 2) * g(2, 3), lambda: 16 * np.pi**4,
                   lambda E, N, m: -(E**2) / (2 * N**2), 2,
                   lambda r, D, H, E: r * np.einsum("...i,...ij,...j->...", D, H, D)),
    "DH2Dt": _Part("int D H^2 D^t", 4, lambda g: g(0, 1) * g(1, 2) * g(2, 3),
                   lambda: -64 * np.pi**6, lambda E, N, m: E**3 / (2 * N**2), 3,
                   lambda r, D, H, E: np.einsum("...i,...ij,...j->...", D, H @ H, D)),
    "DDt3": _Part("int (D D^t)^3", 6, lambda g: g(0, 1) * g(2, 3) * g(4, 5),
                  lambda: -64 * np.pi**6, None, 3, lambda r, D, H, E: _dd(D) ** 3),
    "r4DDt": _Part("int r^4 D D^t", 6, lambda g: g(4, 5), lambda: -4 * np.pi**2,
                   None, 1, lambda r, D, H, E: r**4 * _dd(D)),
    "trH6": _Part("int tr H^6", 6,
                  lambda g: g(0, 1) * g(1, 2) * g(2, 3) * g(3, 4) * g(4, 5) * g(5, 0),
                  lambda: (4 * np.pi**2) ** 6, None, 6,
                  lambda r, D, H, E: _tr(H @ H @ H @ H @ H @ H)),
}


def _zero_sum_tuples(fs: FrequencySet, k: int, cap: int) -> np.ndarray:
    if k == 2:
        return _zero_sum_pairs(fs)
    if k == 4:
        return _zero_sum_quadruples(fs)
    return _zero_sum_sextuples(fs, cap)


def _exact_value(fs: FrequencySet, part: _Part, cap: int) -> float:
    tuples = _zero_sum_tuples(fs, part.k, cap)
    integer = _tensor_sum(fs, tuples, part.weight)
    return float(Fraction(integer, fs.N**part.k)) * part.prefactor()


def _quadrature_value(fs: FrequencySet, part: _Part) -> float:
    M = exact_grid_size(part.k * fs.max_coordinate)
    r, D, H = jet_grids(fs, M)
    return float(np.mean(part.integrand(r, D, H, fs.E)))


def lemma_integral_suite(fs: FrequencySet, which: str, cap: int = S6_CAP) -> tuple[float, float]:
    """(exact lattice-sum value, grid quadrature value) of one torus integral.

    The exact value sums the integer weight of each zero-sum tuple; the grid
    is large enough for the rectangle rule to be exact.
    """
    part = LEMMA_PARTS[which]
    return _exact_value(fs, part, cap), _quadrature_value(fs, part)


class LemmaCheck(NamedTuple):
    which: str
    exact: float
    quadrature: float
    reference: float
    allowance: float
    agree: bool
    within: bool

    @property
    def passed(self) -> bool:
        return self.agree and self.within


def lemma_check(fs: FrequencySet, which: str, rtol: float = 1e-8, cap: int = S6_CAP) -> LemmaCheck:
    """Compare both paths, then the exact value against its leading term or bound.

    For the leading-term parts the allowance is 3 E^j / N^3: the leading term is
    the contribution of the N^2-sized pairing families, and the overlaps that
    inclusion-exclusion removes number at most 3N tuples per family, each with
    weight at most n^j.  For the sextuple parts the reference is E^j R6 and
    the check is |exact| <= reference, the triangle inequality on the weights.
    """
    part = LEMMA_PARTS[which]
    exact, quad = lemma_integral_suite(fs, which, cap)
    E, N = fs.E, fs.N
    scale = max(abs(exact), abs(quad), 1e-300)
    agree = abs(exact - quad) <= rtol * scale
    if part.leading is None:
        R6 = count_s6(fs, cap) / N**6
        reference = E**part.energy_power * R6
        allowance = 0.0
        within = abs(exact) <= reference * (1 + 1e-12)
    else:
        reference = part.leading(E, N, mu_hat(fs, 4))
        allowance = 3 * E**part.energy_power / N**3
        if part.k == 2:
            allowance = 1e-12 * abs(reference)
        within = abs(exact - reference) <= allowance * (1 + 1e-9) + 1e-12 * abs(reference)
    return LemmaCheck(which, exact, quad, reference, allowance, bool(agree), bool(within))


# ---------------------------------------------------------------------------
# singular set


@dataclass(frozen=True)
class SingularSetReport:
    n: int
    M: int
    singular_square_count: int
    measure_estimate: float
    min_abs_r_on_B: float
    positive_count: int = 0
    negative_count: int = 0


def singular_grid_minimum(n: int) -> int:
    """Grid size at which the cosine phases drift by at most 1/4 across a square."""
    return math.ceil(8 * math.sqrt(2) * math.pi * math.sqrt(n))


def singular_set(fs: FrequencySet, grid_M: int | None = None, chunk_rows: int = 64) -> SingularSetReport:
    """Classify the squares of side 1/M centred at (j/M, k/M).

    A square is positive (negative) singular when more than 7/8 of the
    frequencies have cos(2 pi <l, centre>) > 3/4 (< -3/4).  The minimum of
    |r| over flagged squares is taken over centres and corners.
    """
    need = singular_grid_minimum(fs.n)
    M = need if grid_M is None else grid_M
    if M < need:
        raise ValueError(f"grid_M = {M} is below ceil(8 sqrt(2) pi sqrt(n)) = {need}")
    pts = fs.points
    l1 = np.array([int(a) % M for a, _ in pts], dtype=np.int64)
    l2 = np.array([int(b) % M for _, b in pts], dtype=np.int64)
    table = np.cos(2 * np.pi * np.arange(M) / M)
    ks = np.arange(M)
    pos_total = neg_total = 0
    flagged = []
    for j0 in range(0, M, chunk_rows):
        js = np.arange(j0, min(M, j0 + chunk_rows))
        ph = (js[:, None, None] * l1[None, None, :] + ks[None, :, None] * l2[None, None, :]) % M
        cos = table[ph]
        pos = np.count_nonzero(cos > 0.75, axis=2) * 8 > 7 * fs.N
        neg = np.count_nonzero(cos < -0.75, axis=2) * 8 > 7 * fs.N
        pos_total += int(pos.sum())
        neg_total += int(neg.sum())
        jj, kk = np.nonzero(pos | neg)
        flagged.extend(zip(js[jj].tolist(), kk.tolist()))
    count = pos_total + neg_total
    min_abs = math.inf
    if flagged:
        centres = np.array(flagged, dtype=float) / M
        h = 0.5 / M
        probes = [centres] + [centres + np.array([dx, dy]) for dx in (-h, h) for dy in (-h, h)]
        r, _, _ = jet_arrays(fs, np.vstack(probes))
        min_abs = float(np.min(np.abs(r)))
    return SingularSetReport(fs.n, M, count, count / M**2, min_abs, pos_total, neg_total)


# ---------------------------------------------------------------------------
# mean and variance of the nodal length


class VariancePrediction(NamedTuple):
    mean_L: float
    var_L: float


def variance_prediction(fs: FrequencySet) -> VariancePrediction:
    """Expected nodal length sqrt(E)/(2 sqrt 2) and the leading variance c_n E / N^2."""
    E = fs.E
    return VariancePrediction(math.sqrt(E) / (2 * math.sqrt(2)), c_n(fs) * E / fs.N**2)


def variance_error_scale(fs: FrequencySet) -> float:
    """E R5, the size of the error term in the variance asymptotic."""
    from .correlations import r_moment

    return fs.E * r_moment(fs, 5)


# ---------------------------------------------------------------------------
# the Kac-Rice variance integral


def _span_basis(points) -> tuple[tuple[int, int], int]:
    """Basis ((g1, y1), (0, g2)) of the integer span of the frequencies."""
    g1, y1, g2 = 0, 0, 0
    for c, d in points:
        c, d = int(c), int(d)
        if c == 0:
            g2 = math.gcd(g2, d)
            continue
        if g1 == 0:
            g1, y1 = c, d
            continue
        g = math.gcd(g1, c)
        # extended gcd coefficients
        s, t = _bezout(g1, c)
        ny = s * y1 + t * d
        g2 = math.gcd(g2, (c // g) * y1 - (g1 // g) * d)
        g1, y1 = g, ny
    if g1 < 0:
        g1, y1 = -g1, -y1
    if g2:
        y1 %= g2
    return (g1, y1), abs(g2)


def _bezout(a: int, b: int) -> tuple[int, int]:
    x0, x1, y0, y1 = 1, 0, 0, 1
    while b:
        q, a, b = a // b, b, a % b
        x0, x1 = x1, x0 - q * x1
        y0, y1 = y1, y0 - q * y1
    return (x0, y0) if a > 0 else (-x0, -y0)


def degenerate_points(fs: FrequencySet) -> list[tuple[float, float]]:
    """Torus points where |r| = 1, i.e. every <l, x> lies in Z or every one in Z + 1/2."""
    (g1, y1), g2 = _span_basis(fs.points)
    cands = set()
    for m2 in range(2 * g2):
        x2 = m2 / (2 * g2)
        for m1 in range(2 * g1):
            x1 = ((m1 / 2 - y1 * x2) / g1) % 1.0
            cands.add((round(x1, 12) % 1.0, round(x2, 12) % 1.0))
    cands = sorted(cands)
    r, _, _ = jet_arrays(fs, np.array(cands))
    return [c for c, v in zip(cands, r) if abs(v) > 1 - 1e-9]


def _bump(s: np.ndarray) -> np.ndarray:
    """Smooth cutoff: 1 on [0, 1/2], 0 on [1, inf), C-infinity in between."""
    s = np.asarray(s, dtype=float)
    u = np.clip(2 * s - 1, 0.0, 1.0)

    def h(z):
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(z > 0, np.exp(-1 / np.where(z > 0, z, 1.0)), 0.0)

    return h(1 - u) / (h(1 - u) + h(u))


def _torus_offsets(xs: np.ndarray, p) -> np.ndarray:
    d = xs - np.asarray(p)
    return d - np.round(d)


class VarianceIntegral(NamedTuple):
    variance: float
    integral: float
    grid_part: float
    singular_part: float
    grid_M: int
    degenerate: tuple


def _k2_minus_quarter(fs: FrequencySet, xs: np.ndarray, **kw) -> np.ndarray:
    r, D, H = jet_arrays(fs, xs)
    X, Y = perturbation_arrays(r, D, H, fs.E)
    return K2_exact_arrays(X, Y, r, check=False, **kw) - 0.25


def _jets_near(fs: FrequencySet, p, offs: np.ndarray):
    """1 - r^2, A + Y and A - Y at p + offs for a point p with |r(p)| = 1.

    Every phase at p is a multiple of pi, so the phases at p + offs are those
    of offs up to a common sign.  1 -+ cos then become squared sines or
    cosines of half angles, and the sum/difference covariances
        A - Y = (2/E) (G- - D^t D / (1 + r)),  A + Y = (2/E) (G+ - D^t D / (1 - r)),
    with G-+ = (4 pi^2 / N) sum l^t l (1 -+ cos), are formed without the
    cancellation that 1 + X - Y suffers near p.
    """
    lam = fs.array.astype(float)
    sign = 1.0 if covariance_jet(fs, p).r > 0 else -1.0
    ph = 2 * np.pi * (offs @ lam.T)
    N = fs.N
    sin_half, cos_half = np.sin(ph / 2) ** 2, np.cos(ph / 2) ** 2
    minus, plus = (2 * sin_half, 2 * cos_half) if sign > 0 else (2 * cos_half, 2 * sin_half)
    D = -(2 * np.pi / N) * sign * (np.sin(ph) @ lam)
    one_minus_r, one_plus_r = minus.mean(axis=1), plus.mean(axis=1)
    outer = lam[:, :, None] * lam[:, None, :]
    g_minus = (4 * np.pi**2 / N) * np.einsum("ml,lij->mij", minus, outer)
    g_plus = (4 * np.pi**2 / N) * np.einsum("ml,lij->mij", plus, outer)
    DtD = D[:, :, None] * D[:, None, :]
    E = fs.E
    Mn = (2 / E) * (g_minus - DtD / one_plus_r[:, None, None])
    P = (2 / E) * (g_plus - DtD / one_minus_r[:, None, None])
    return one_minus_r * one_plus_r, P, Mn


def _k2_minus_quarter_near(fs: FrequencySet, p, offs: np.ndarray, step: float, batch: int = 8) -> np.ndarray:
    omr2, P, Mn = _jets_near(fs, p, offs)
    X = (P + Mn) / 2 - np.eye(2)
    Y = (P - Mn) / 2
    out = np.empty(len(omr2))
    for lo in range(0, len(omr2), batch):
        sl = slice(lo, lo + batch)
        # the smallest eigenvalue of Omega sets how far out in t the integrand lives
        lam_min = min(np.min(np.linalg.eigvalsh(P[sl])), np.min(np.linalg.eigvalsh(Mn[sl])))
        hi = 50.0 + min(40.0, max(0.0, -math.log(max(lam_min, 1e-300))))
        rule = _log_rule(step, -50.0, hi)
        F = _berry_sum(X[sl], Y[sl], rule=rule, split=(P[sl], Mn[sl])) / (2 * np.pi)
        out[sl] = F / (2 * np.pi * np.sqrt(omr2[sl])) - 0.25
    return out


def kac_rice_variance(fs: FrequencySet, grid_M: int | None = None, radius: float | None = None,
                      radial_nodes: int = 24, angular_nodes: int = 32, tol: float = 1e-9,
                      start_nodes: int = 48, log_step: float = 0.5) -> VarianceIntegral:
    """Var(L) = (E/2) times the torus integral of K2 - 1/4.

    The torus is split by a smooth partition of unity.  Near each point with
    |r| = 1, where K2 blows up like 1/|x - p|, the integral is taken in polar
    coordinates (Gauss in the radius, trapezoid in the angle); the remainder
    is smooth and periodic, so the midpoint rule on an M x M grid converges
    rapidly.
    """
    if fs.N < 8:
        # four coefficients cannot support the six-dimensional Kac-Rice vector
        raise NotPositiveDefiniteError(f"Omega is singular everywhere when N = {fs.N}")
    pts = degenerate_points(fs)
    root = math.sqrt(fs.n)
    rho = 0.5 / root if radius is None else radius
    if len(pts) > 1:
        dmin = min(math.dist(a, b) for i, a in enumerate(pts) for b in pts[i + 1:])
        rho = min(rho, 0.45 * dmin)
    M = int(16 * math.ceil(root)) if grid_M is None else grid_M
    kw = {"tol": tol, "start": start_nodes}

    g = (np.arange(M) + 0.5) / M
    xs = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    weight = np.ones(len(xs))
    for p in pts:
        weight -= _bump(np.linalg.norm(_torus_offsets(xs, p), axis=1) / rho)
    keep = weight > 0
    vals = np.zeros(len(xs))
    vals[keep] = weight[keep] * _k2_minus_quarter(fs, xs[keep], **kw)
    grid_part = float(vals.sum()) / M**2

    x_r, w_r = np.polynomial.legendre.leggauss(radial_nodes)
    radii = (x_r + 1) * rho / 2
    w_r = w_r * rho / 2
    # K2(p + d) = K2(p - d) at a degenerate point, so half the circle suffices
    half_nodes = angular_nodes // 2
    theta = np.pi * np.arange(half_nodes) / half_nodes
    rr, tt = np.meshgrid(radii, theta, indexing="ij")
    wts = (w_r[:, None] * rr * (2 * np.pi / half_nodes) * _bump(rr / rho)).ravel()
    offs = np.stack([rr * np.cos(tt), rr * np.sin(tt)], -1).reshape(-1, 2)
    singular_part = 0.0
    for p in pts:
        singular_part += float(wts @ _k2_minus_quarter_near(fs, p, offs, log_step))
    integral = grid_part + singular_part
    return VarianceIntegral(fs.E / 2 * integral, integral, grid_part, singular_part, M, tuple(pts))
