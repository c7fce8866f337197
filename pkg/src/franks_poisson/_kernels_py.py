"""Pure-numpy kernels; reference implementation of the compiled module.

A generated field on R^D is

    H(p) = c.p + 1/2 p^T Q p + sum_t amp_t * F_t(M_t p + b_t)

with F_t(u) = fx(u) fy(u) alpha_t l(rho_q(u)) rho_i(u), where rho_q is half
the squared norm of u restricted to ``qmask_t``, rho_i = (u_ix^2 + u_iy^2)/2,
and for transit terms (tkind 1) fx = l(2 u_gx - 1), fy = l(u_gy); for K
terms (tkind 0) fx = fy = 1.  ``slots_t = (gx, gy, ix, iy)``.

Every batched routine takes points as a (B, D) array.  Terms whose bump
factors vanish contribute exact zeros, so fields agree bit-for-bit with
their linear part off the support.
"""
from __future__ import annotations

import numpy as np

from .bump import ell, ell_d1

BACKEND = "python"


def _term_parts(params, t, U):
    """Return (F, dF/du) of term ``t`` at rows of ``U``."""
    _, _, _, _, _, _, alpha, tkind, slots, qmask = params
    gx, gy, ix, iy = (int(s) for s in slots[t])
    a = alpha[t]
    q = U * qmask[t]
    rho = 0.5 * np.einsum("bi,bi->b", q, q)
    rho_i = 0.5 * (U[:, ix] ** 2 + U[:, iy] ** 2)
    l0 = np.asarray(ell(rho))
    l1 = np.asarray(ell_d1(rho))
    K = a * l0 * rho_i
    gK = (a * l1 * rho_i)[:, None] * q
    gK[:, ix] += a * l0 * U[:, ix]
    gK[:, iy] += a * l0 * U[:, iy]
    if tkind[t] == 1:
        sx = 2.0 * U[:, gx] - 1.0
        fx, dfx = np.asarray(ell(sx)), 2.0 * np.asarray(ell_d1(sx))
        fy, dfy = np.asarray(ell(U[:, gy])), np.asarray(ell_d1(U[:, gy]))
        F = fx * fy * K
        gF = (fx * fy)[:, None] * gK
        gF[:, gx] += dfx * fy * K
        gF[:, gy] += fx * dfy * K
        return F, gF
    return K, gK


def field_value(params, P):
    c, Q, has_quad, M, b, amp, *_ = params
    P = np.atleast_2d(np.asarray(P, dtype=float))
    out = P @ c
    if has_quad:
        out = out + 0.5 * np.einsum("bi,ij,bj->b", P, Q, P)
    for t in range(len(amp)):
        U = P @ M[t].T + b[t]
        F, _ = _term_parts(params, t, U)
        out = out + amp[t] * F
    return out


def field_gradient(params, P):
    c, Q, has_quad, M, b, amp, *_ = params
    P = np.atleast_2d(np.asarray(P, dtype=float))
    G = np.broadcast_to(c, P.shape).copy()
    if has_quad:
        G += P @ Q
    for t in range(len(amp)):
        U = P @ M[t].T + b[t]
        _, gF = _term_parts(params, t, U)
        if np.any(gF):
            G += amp[t] * (gF @ M[t])
    return G


def vector_field(params, d, P):
    """``J_hat grad H`` on rows of ``P``; z components are zero."""
    G = field_gradient(params, P)
    X = np.zeros_like(G)
    X[:, :d] = -G[:, d : 2 * d]
    X[:, d : 2 * d] = G[:, :d]
    return X


def _rk4_step(params, d, X, h):
    k1 = vector_field(params, d, X)
    k2 = vector_field(params, d, X + 0.5 * h * k1)
    k3 = vector_field(params, d, X + 0.5 * h * k2)
    k4 = vector_field(params, d, X + h * k3)
    return X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_integrate(params, d, X0, h, nsteps, track_energy=True):
    """``nsteps`` classical RK4 steps of size ``h``; returns (X, max |H - H0|)."""
    X = np.array(X0, dtype=float, ndmin=2)
    drift = np.zeros(X.shape[0])
    H0 = field_value(params, X) if track_energy else None
    for _ in range(int(nsteps)):
        X = _rk4_step(params, d, X, h)
        if not np.all(np.isfinite(X)):
            break
        if track_energy:
            drift = np.maximum(drift, np.abs(field_value(params, X) - H0))
    return X, drift


def rk4_trajectory(params, d, X0, h, nsteps):
    X = np.array(X0, dtype=float, ndmin=2)
    out = np.empty((int(nsteps) + 1,) + X.shape)
    out[0] = X
    for k in range(int(nsteps)):
        X = _rk4_step(params, d, X, h)
        out[k + 1] = X
    return out


def rk4_section(params, d, X0, slot, level, h, t_max, tol, max_bisect):
    """Integrate until coordinate ``slot`` reaches ``level`` (from below).

    Returns (hit points, crossing times, status) with status 1 for a located
    crossing, 0 for no crossing before ``t_max`` and -1 for divergence.
    The crossing time is refined by bisection on the size of a single RK4
    step from the last state before the crossing.
    """
    X = np.array(X0, dtype=float, ndmin=2)
    B = X.shape[0]
    status = np.zeros(B, dtype=np.int64)
    tau = np.zeros(B)
    hit = X.copy()
    pre = X.copy()
    pre_t = np.zeros(B)
    done = X[:, slot] == level
    # points on the level cross at t = 0; points past it never cross from below
    status[done] = 1
    active = X[:, slot] < level
    nmax = int(np.ceil(t_max / h))
    for k in range(nmax):
        if not active.any():
            break
        Xa = X[active]
        Xn = _rk4_step(params, d, Xa, h)
        idx = np.flatnonzero(active)
        bad = ~np.all(np.isfinite(Xn), axis=1)
        crossed = (Xn[:, slot] - level >= 0.0) & ~bad
        status[idx[bad]] = -1
        pre[idx[crossed]] = Xa[crossed]
        pre_t[idx[crossed]] = k * h
        X[idx] = Xn
        active[idx[bad | crossed]] = False
        done[idx[crossed]] = True
    todo = np.flatnonzero(done & (status == 0))
    if todo.size:
        lo = np.zeros(todo.size)
        hi = np.full(todo.size, h)
        P0 = pre[todo]
        Y = P0.copy()
        mid = hi.copy()
        for _ in range(int(max_bisect)):
            mid = 0.5 * (lo + hi)
            Y = _rk4_step_var(params, d, P0, mid)
            r = Y[:, slot] - level
            above = r >= 0.0
            hi = np.where(above, mid, hi)
            lo = np.where(above, lo, mid)
            if np.all(np.abs(r) <= tol):
                break
        hit[todo] = Y
        tau[todo] = pre_t[todo] + mid
        status[todo] = 1
    return hit, tau, status


def _rk4_step_var(params, d, X, hs):
    """One RK4 step with a per-row step size."""
    hs = np.asarray(hs, dtype=float)[:, None]
    k1 = vector_field(params, d, X)
    k2 = vector_field(params, d, X + 0.5 * hs * k1)
    k3 = vector_field(params, d, X + 0.5 * hs * k2)
    k4 = vector_field(params, d, X + hs * k3)
    return X + (hs / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
