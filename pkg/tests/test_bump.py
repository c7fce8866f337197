import numpy as np
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from franks_poisson.bump import ell, ell_antiderivative, ell_d1, ell_d2, make_bump


def test_values():
    assert ell(0.0) == 1.0
    assert ell(0.25) == 1.0
    assert ell(2.0) == 0.0
    assert ell(-1.0) == 0.0


def test_unit_integral():
    b = make_bump()
    assert abs(b.integral - 1.0) <= 1e-12
    # independent numerical quadrature as the oracle
    pieces = [(-1, -0.25), (-0.25, 0.25), (0.25, 1)]
    total = sum(quad(ell, a, c, epsabs=1e-14, epsrel=1e-14)[0] for a, c in pieces)
    assert abs(total - 1.0) <= 1e-12


def test_range_and_monotone():
    r = np.linspace(-1.5, 1.5, 30001)
    v = ell(r)
    assert v.min() >= 0.0 and v.max() <= 1.0
    right = v[r >= 0.25]
    assert np.all(np.diff(right) <= 0)


def test_continuity_at_breakpoints():
    for bp in (-1.0, -0.25, 0.25, 1.0):
        for f in (ell, ell_d1, ell_d2):
            assert abs(f(bp - 1e-13) - f(bp + 1e-13)) <= 1e-10


def test_c2_norm_reported():
    b = make_bump()
    sup0, sup1, sup2 = b.sup_norms
    assert sup0 == 1.0
    assert b.c2_norm == max(sup0, sup1, sup2)
    assert 0 < sup1 < sup2


@given(st.floats(-0.99, 0.99))
def test_derivatives_match_differences(r):
    h = 1e-6
    assert abs((ell(r + h) - ell(r - h)) / (2 * h) - ell_d1(r)) <= 1e-6
    # the third derivative jumps at the breakpoints, so this difference is only O(h) there
    h = 1e-7
    assert abs((ell_d1(r + h) - ell_d1(r - h)) / (2 * h) - ell_d2(r)) <= 1e-4


@given(st.floats(-1.2, 1.2), st.floats(-1.2, 1.2))
def test_antiderivative(a, b):
    lo, hi = min(a, b), max(a, b)
    ref = quad(ell, lo, hi, points=[p for p in (-1, -0.25, 0.25, 1) if lo < p < hi], epsabs=1e-13)[0]
    assert abs(ell_antiderivative(hi) - ell_antiderivative(lo) - ref) <= 1e-11
