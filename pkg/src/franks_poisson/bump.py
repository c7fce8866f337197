"""C^2 piecewise-polynomial bump with unit integral.

ell(r) = 1 on |r| <= 1/4 and 0 on |r| >= 1.  On the transition
t = (|r| - 1/4) / (3/4) in [0, 1] it equals 1 - s(t) where
s'(t) = 168 t^2 (1 - t)^5 (a normalized Beta(3, 6) density), so the
transition is monotone, matches value, first and second derivative at both
ends, and has mean 1/3.  Plateau mass 1/2 plus two transitions of mass 1/4
gives a total integral of exactly 1.

With u = 1 - t the transition is ``u^6 (28 - 48 u + 21 u^2)``; the quadratic
has no real roots, so this form is nonnegative in floating point as well.
"""
from __future__ import annotations

from functools import cached_property

import numpy as np

PLATEAU = 0.25
OUTER = 1.0
WIDTH = OUTER - PLATEAU

# int_0^t (1 - s)
F_COEF = np.array([0.0, 1.0, 0.0, 0.0, -14.0, 42.0, -56.0, 40.0, -15.0, 7.0 / 3.0])

_pv = np.polynomial.polynomial.polyval


def _split(r):
    r = np.asarray(r, dtype=float)
    a = np.abs(r)
    mid = (a > PLATEAU) & (a < OUTER)
    t = np.where(mid, (a - PLATEAU) / WIDTH, 0.0)
    return r, a, mid, t


def ell(r):
    r, a, mid, t = _split(r)
    out = np.where(a <= PLATEAU, 1.0, 0.0)
    u = 1.0 - t
    out = np.where(mid, u**6 * (28.0 + u * (-48.0 + 21.0 * u)), out)
    return out if out.ndim else float(out)


def ell_d1(r):
    r, a, mid, t = _split(r)
    u = 1.0 - t
    out = np.where(mid, -168.0 * t * t * u**5 / WIDTH * np.sign(r), 0.0)
    return out if out.ndim else float(out)


def ell_d2(r):
    r, a, mid, t = _split(r)
    u = 1.0 - t
    out = np.where(mid, -168.0 * t * u**4 * (2.0 * u - 5.0 * t) / WIDTH**2, 0.0)
    return out if out.ndim else float(out)


def ell_antiderivative(u):
    """``int_{-inf}^u ell``."""
    u = np.asarray(u, dtype=float)
    a = np.abs(u)
    half = np.where(a <= PLATEAU, a, 0.5)
    mid = (a > PLATEAU) & (a < OUTER)
    t = np.where(mid, (a - PLATEAU) / WIDTH, 0.0)
    half = np.where(mid, PLATEAU + WIDTH * _pv(t, F_COEF), half)
    out = 0.5 + np.sign(u) * half
    return out if out.ndim else float(out)


class BumpFunction:
    """Callable wrapper exposing derivatives, the integral and the sup norms."""

    breakpoints = (-OUTER, -PLATEAU, PLATEAU, OUTER)

    def __call__(self, r):
        return ell(r)

    value = staticmethod(ell)
    d1 = staticmethod(ell_d1)
    d2 = staticmethod(ell_d2)
    antiderivative = staticmethod(ell_antiderivative)

    @property
    def integral(self) -> float:
        return float(ell_antiderivative(OUTER) - ell_antiderivative(-OUTER))

    @cached_property
    def sup_norms(self) -> tuple[float, float, float]:
        r = np.linspace(-OUTER, OUTER, 200001)
        return (
            float(np.abs(ell(r)).max()),
            float(np.abs(ell_d1(r)).max()),
            float(np.abs(ell_d2(r)).max()),
        )

    @property
    def c2_norm(self) -> float:
        return max(self.sup_norms)


def make_bump() -> BumpFunction:
    return BumpFunction()
