from collections import Counter
from itertools import product
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from arithwaves.correlations import (
    CapExceededError,
    NonConvergenceError,
    additive_energy,
    census,
    count_s4,
    count_s4_bruteforce,
    count_s6,
    count_s6_bruteforce,
    diagonal_s6_count,
    grid_moment,
    r_moment,
    r_moment_exact,
    s6_decay_scan,
    sum_counts,
    sumset,
)
from arithwaves.lattice import enumerate_lambda, r2
from arithwaves.torus import exact_grid_size

small_levels = st.integers(1, 3000).filter(lambda n: 0 < r2(n) <= 16)

TABLE = {  # n: (N, S4, S6, additive energy, |A|), all brute-force confirmed
    1: (4, 36, 400, 216, 8),
    5: (8, 168, 5840, 12400, 32),
    25: (12, 396, 21360, 77096, 72),
    65: (16, 720, 58480, 344736, 128),
    325: (24, 1656, 201120, 1956448, 288),
}


@pytest.mark.parametrize("n", sorted(TABLE))
def test_counts_table(n):
    N, s4, s6, energy, size = TABLE[n]
    fs = enumerate_lambda(n)
    assert (fs.N, count_s4(fs), count_s6(fs), additive_energy(fs), len(sumset(fs))) == TABLE[n]


@given(small_levels)
@settings(max_examples=25, deadline=None)
def test_s4_s6_against_brute_force(n):
    fs = enumerate_lambda(n)
    assert count_s4(fs) == count_s4_bruteforce(fs) == 3 * fs.N**2 - 3 * fs.N
    assert count_s6(fs) == count_s6_bruteforce(fs)


def test_s6_counter_path_matches_numpy_path():
    fs = enumerate_lambda(325)
    assert count_s6(fs) == sum(c * c for c in sum_counts(fs, 3).values())


@pytest.mark.parametrize("N", [4, 6, 8])
def test_diagonal_count_by_inclusion_exclusion(N):
    # brute force over abstract frequencies +-1..+-N/2
    freqs = [k for k in range(1, N // 2 + 1)] + [-k for k in range(1, N // 2 + 1)]

    def paired(t):
        c = Counter(t)
        return all(c[v] == c[-v] for v in c)

    assert diagonal_s6_count(N) == sum(paired(t) for t in product(freqs, repeat=6))


def test_diagonal_count_closed_form():
    assert diagonal_s6_count(4) == 400
    for n in TABLE:
        fs = enumerate_lambda(n)
        assert count_s6(fs) >= diagonal_s6_count(fs.N)


def test_additive_energy_brute_force():
    fs = enumerate_lambda(5)
    A = sumset(fs)
    reps = Counter((a[0] + b[0], a[1] + b[1]) for a in A for b in A)
    assert additive_energy(fs) == sum(c * c for c in reps.values())
    assert (0, 0) not in A


@pytest.mark.parametrize("n", [1, 5, 25, 65])
def test_even_moments_exact_on_grid(n):
    fs = enumerate_lambda(n)
    for k in (2, 4, 6):
        M = exact_grid_size(k * fs.max_coordinate)
        assert grid_moment(fs, k, M, absolute=False) == pytest.approx(float(r_moment_exact(fs, k)), rel=1e-10)


def test_even_moment_grid_too_small_is_wrong():
    fs = enumerate_lambda(25)
    # aliasing: with M = 5 the pairs (5, 0) and (0, 5) collapse onto the origin
    assert grid_moment(fs, 2, 5) != pytest.approx(1 / 12)


def test_odd_moments_converge_and_are_bounded():
    fs = enumerate_lambda(65)
    R3, R5 = r_moment(fs, 3), r_moment(fs, 5)
    R2, R4, R6 = (float(r_moment_exact(fs, k)) for k in (2, 4, 6))
    # log-convexity of moments
    assert R3**2 <= R2 * R4 * (1 + 1e-9)
    assert R5**2 <= R4 * R6 * (1 + 1e-9)


def test_r_moment_errors():
    fs = enumerate_lambda(25)
    with pytest.raises(ValueError):
        r_moment(fs, 7)
    with pytest.raises(ValueError):
        r_moment(fs, 3, grid_M=8)
    with pytest.raises(NonConvergenceError):
        r_moment(fs, 3, grid_M=31, rtol=1e-15)
    with pytest.raises(ValueError):
        r_moment_exact(fs, 3)


def test_caps():
    fs = enumerate_lambda(5 * 13 * 17 * 29 * 37)  # N = 64
    with pytest.raises(CapExceededError):
        count_s6(fs, cap=32)
    with pytest.raises(CapExceededError):
        additive_energy(fs, cap=32)
    with pytest.raises(CapExceededError):
        count_s6_bruteforce(fs)


def test_census_and_scan():
    c = census(enumerate_lambda(25))
    assert c.r_moments[2] == pytest.approx(1 / 12)
    assert c.additive_energy == 77096
    rows = s6_decay_scan([5, 65])
    assert rows[0].s6 == 5840 and rows[1].s6_over_N4 == pytest.approx(58480 / 16**4)


def test_r2_exact_is_fraction():
    assert r_moment_exact(enumerate_lambda(5), 2) == Fraction(1, 8)
    assert np.isclose(float(r_moment_exact(enumerate_lambda(5), 6)), 5840 / 8**6)


@pytest.mark.parametrize("n", [5, 65, 325])
def test_three_fold_mass_conservation(n):
    fs = enumerate_lambda(n)
    assert sum(sum_counts(fs, 3).values()) == fs.N**3


def test_s6_normalizations():
    assert count_s6(enumerate_lambda(1)) / 4**4 == 1.5625
    for row in s6_decay_scan([5, 65, 1105, 32045]):
        assert row.s6_over_N3 >= 6 * (1 - 3 / row.N)
