"""Hamiltonian vector fields, RK4 flows, closed-form flows, flow Jacobians
and Poincare maps between the sections {x_1 = c}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .bump import ell, ell_antiderivative, ell_d1, ell_d2
from .core import phi_indices, symplectic_defect
from .errors import DimensionError, DivergedError, DomainError, NoReturn, OutOfTube
from .fields import HamiltonianField

DEFAULT_STEP = 1e-3
FD_STEP = 1e-5
T_MAX = 10.0
SECTION_TOL = 1e-12  # required |x_1 - c| at the hit point
BISECT_TOL = 1e-15  # bisection target, well inside SECTION_TOL
MAX_BISECT = 60


@dataclass
class FlowResult:
    endpoint: np.ndarray
    time: float
    steps: int
    drift: float  # max |H(x_k) - H(x_0)| over the steps, all points


@dataclass
class PoincareResult:
    hit: np.ndarray
    tau: float
    jacobian: np.ndarray
    section_residual: float
    symplectic_defect: float
    tau_spread: float = 0.0  # max |tau - tau(x0)| over the FD stencil


def _as_points(H, p):
    P = np.asarray(p, dtype=float)
    single = P.ndim == 1
    P = np.atleast_2d(P)
    if P.shape[-1] != H.dim:
        raise DimensionError(f"field lives on R^{H.dim}, got points of length {P.shape[-1]}")
    return P, single


def hamiltonian_vector_field(H, p):
    """``X_H(p) = J_hat grad H(p)``."""
    return H.vector_field(p)


def resolved_step(H, step: float = DEFAULT_STEP) -> float:
    """``step`` measured in units of the fastest bump argument of ``H``.

    The bump is C^2, so RK4 loses order where a trajectory crosses its
    breakpoints; taking the step relative to the bump argument keeps the
    energy drift of chained fields at the level of a single transit.
    """
    rate = H.bump_rate() if isinstance(H, HamiltonianField) else 1.0
    return step / rate


def _steps(t, step):
    if not step > 0:
        raise DomainError(f"step must be positive, got {step}")
    if not math.isfinite(t):
        raise DomainError(f"flow time must be finite, got {t}")
    nsteps = max(1, int(math.ceil(abs(t) / step - 1e-9))) if t != 0 else 0
    return nsteps, (t / nsteps if nsteps else 0.0)


def _generic_rk4(H, X, h, nsteps, track):
    H0 = H.value(X) if track else None
    drift = np.zeros(X.shape[0])
    f = H.vector_field
    for _ in range(nsteps):
        k1 = f(X)
        k2 = f(X + 0.5 * h * k1)
        k3 = f(X + 0.5 * h * k2)
        k4 = f(X + h * k3)
        X = X + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(X)):
            break
        if track:
            drift = np.maximum(drift, np.abs(H.value(X) - H0))
    return X, drift


def _rk4(H, X, h, nsteps, track=True):
    if isinstance(H, HamiltonianField):
        return kernels.rk4_integrate(H.params, H.d, X, h, nsteps, track)
    return _generic_rk4(H, np.array(X, dtype=float), h, nsteps, track)


def integrate_flow(H, x0, t: float, step: float = DEFAULT_STEP, track_energy: bool = True) -> FlowResult:
    """Classical RK4 approximation of ``phi_H^t(x0)`` (rows of ``x0`` for a batch)."""
    X, single = _as_points(H, x0)
    nsteps, h = _steps(t, step)
    X, drift = _rk4(H, X, h, nsteps, track_energy)
    if not np.all(np.isfinite(X)):
        raise DivergedError(f"non-finite state while integrating to t = {t}")
    return FlowResult(X[0] if single else X, float(t), nsteps, float(drift.max(initial=0.0)))


def trajectory(H: HamiltonianField, x0, t: float, step: float = DEFAULT_STEP):
    """Return (times, states) with states shaped (steps+1, D) or (steps+1, B, D)."""
    X, single = _as_points(H, x0)
    nsteps, h = _steps(t, step)
    states = kernels.rk4_trajectory(H.params, H.d, X, h, nsteps)
    times = h * np.arange(nsteps + 1)
    return times, (states[:, 0] if single else states)


def exact_or_rk4(H, x0, t, step=DEFAULT_STEP):
    """Exact flow when the field is affine, RK4 otherwise."""
    if isinstance(H, HamiltonianField) and H.n_terms == 0:
        return H.exact_flow(t, x0)
    return integrate_flow(H, x0, t, step, track_energy=False).endpoint


# closed forms --------------------------------------------------------------


def rotation_rates(i: int, p, d: int):
    """Constants of motion ``(theta_i, theta_j)`` of the K_i flow at rows of ``p``.

    Returns an array of shape (B, d): entry j is the angular rate of plane j
    in units of alpha.
    """
    P = np.atleast_2d(np.asarray(p, dtype=float))
    rho = 0.5 * np.einsum("bi,bi->b", P, P)
    rho_i = 0.5 * (P[:, i - 1] ** 2 + P[:, d + i - 1] ** 2)
    l0 = np.asarray(ell(rho))
    l1 = np.asarray(ell_d1(rho))
    rates = np.repeat((l1 * rho_i)[:, None], d, axis=1)
    rates[:, i - 1] += l0
    return rates


def closed_form_K_flow(alpha: float, i: int, t, p, d: int):
    """``phi_{K_i}^t(p)``: plane j rotates by ``t alpha theta_j``; z is fixed.

    ``t`` may be a scalar or one time per row of ``p``.
    """
    P = np.asarray(p, dtype=float)
    single = P.ndim == 1
    P = np.atleast_2d(P)
    if not 1 <= i <= d or P.shape[1] < 2 * d:
        raise DomainError(f"plane index {i} / dimension {P.shape[1]} incompatible with d = {d}")
    ang = alpha * np.asarray(t, dtype=float).reshape(-1, 1) * rotation_rates(i, P, d)
    c, s = np.cos(ang), np.sin(ang)
    x, y = P[:, :d], P[:, d : 2 * d]
    out = P.copy()
    out[:, :d] = c * x - s * y
    out[:, d : 2 * d] = s * x + c * y
    return out[0] if single else out


def closed_form_K_jacobian(alpha: float, i: int, t: float, p, d: int):
    """Exact Jacobians of ``phi_{K_i}^t`` at rows of ``p``, shape (B, D, D).

    Plane j rotates by ``a_j = t alpha theta_j(p)``, so the derivative is the
    block rotation plus the rank-d term ``(dR_j/da_j) q_j  (x)  grad a_j``.
    """
    P = np.atleast_2d(np.asarray(p, dtype=float))
    B, D = P.shape
    if not 1 <= i <= d or D < 2 * d:
        raise DomainError(f"plane index {i} / dimension {D} incompatible with d = {d}")
    rho = 0.5 * np.einsum("bi,bi->b", P, P)
    rho_i = 0.5 * (P[:, i - 1] ** 2 + P[:, d + i - 1] ** 2)
    l1, l2 = np.asarray(ell_d1(rho)), np.asarray(ell_d2(rho))
    ang = alpha * t * rotation_rates(i, P, d)
    c, s = np.cos(ang), np.sin(ang)
    x, y = P[:, :d], P[:, d : 2 * d]
    # grad theta_j = (l'' rho_i + [j == i] l') p + l' grad rho_i
    grad_common = (l2 * rho_i)[:, None] * P
    grad_rho_i = np.zeros_like(P)
    grad_rho_i[:, i - 1], grad_rho_i[:, d + i - 1] = P[:, i - 1], P[:, d + i - 1]
    grad_common += l1[:, None] * grad_rho_i
    J = np.zeros((B, D, D))
    idx = np.arange(d)
    J[:, idx, idx] = c
    J[:, idx, d + idx] = -s
    J[:, d + idx, idx] = s
    J[:, d + idx, d + idx] = c
    if D > 2 * d:
        z = np.arange(2 * d, D)
        J[:, z, z] = 1.0
    dx = -(s * x + c * y)  # d(out_x)/d a_j
    dy = c * x - s * y
    for j in range(d):
        grad = grad_common + (l1[:, None] * P if j == i - 1 else 0.0)
        grad = alpha * t * grad
        J[:, j, :] += dx[:, j, None] * grad
        J[:, d + j, :] += dy[:, j, None] * grad
    return J


def transit_validity(alpha: float, i: int, p, d: int):
    """Margin ``1/4 - |y_1| - 2|K_i(q)|``; the closed form holds when it is >= 0."""
    P = np.atleast_2d(np.asarray(p, dtype=float))
    m = d + 1
    q = np.delete(P, [0, m], axis=1)
    rho = 0.5 * np.einsum("bi,bi->b", q, q)
    rho_i = 0.5 * (q[:, i - 1] ** 2 + q[:, d + i - 1] ** 2)
    K = alpha * np.asarray(ell(rho)) * rho_i
    return 0.25 - np.abs(P[:, m]) - 2.0 * np.abs(K)


def closed_form_transit_flow(alpha: float, i: int, t: float, p, d: int):
    """Flow of ``-y_1 + 2 l(2x_1 - 1) l(y_1) K_i`` on R^{2(d+1)+n}.

    x_1 moves at unit speed, y_1 picks up ``2K [l(2x_1 + 2t - 1) - l(2x_1 - 1)]``
    and the leaf coordinates follow the K_i flow for the accumulated time
    ``L(2x_1 + 2t - 1) - L(2x_1 - 1)`` with L the antiderivative of l.
    """
    P = np.asarray(p, dtype=float)
    single = P.ndim == 1
    P = np.atleast_2d(P).copy()
    m = d + 1
    if not 1 <= i <= d or P.shape[1] < 2 * m:
        raise DomainError(f"plane index {i} / dimension {P.shape[1]} incompatible with d = {d}")
    margin = transit_validity(alpha, i, P, d)
    if np.any(margin < 0):
        raise OutOfTube(f"|y_1| + 2|K| exceeds 1/4 (margin {margin.min():.3e}); closed form does not apply")
    x1 = P[:, 0]
    keep = [j for j in range(P.shape[1]) if j not in (0, m)]
    q = P[:, keep]
    rho = 0.5 * np.einsum("bi,bi->b", q, q)
    K = alpha * np.asarray(ell(rho)) * 0.5 * (q[:, i - 1] ** 2 + q[:, d + i - 1] ** 2)
    a0, a1 = 2.0 * x1 - 1.0, 2.0 * (x1 + t) - 1.0
    s = np.asarray(ell_antiderivative(a1)) - np.asarray(ell_antiderivative(a0))
    out = P.copy()
    out[:, 0] = x1 + t
    out[:, m] = P[:, m] + 2.0 * K * (np.asarray(ell(a1)) - np.asarray(ell(a0)))
    out[:, keep] = closed_form_K_flow(alpha, i, s, q, d)
    return out[0] if single else out


# Jacobians ------------------------------------------------------------------


def fd_step_for(x0, fd_step=None) -> float:
    base = FD_STEP if fd_step is None else float(fd_step)
    if not base > 0:
        raise DomainError(f"fd_step must be positive, got {base}")
    return base * max(1.0, float(np.linalg.norm(x0)))


def _stencil(x0, idx, h):
    k = len(idx)
    X = np.repeat(np.asarray(x0, dtype=float)[None], 2 * k, axis=0)
    for c, j in enumerate(idx):
        X[2 * c, j] += h
        X[2 * c + 1, j] -= h
    return X


def _central(Y, idx_out, k, h):
    J = np.empty((len(idx_out), k))
    for c in range(k):
        J[:, c] = (Y[2 * c, idx_out] - Y[2 * c + 1, idx_out]) / (2.0 * h)
    return J


def map_jacobian(fmap, x0, fd_step=None, richardson: bool = False, idx_in=None, idx_out=None):
    """Central-difference Jacobian of a batched map ``fmap`` (rows in, rows out)."""
    x0 = np.asarray(x0, dtype=float)
    D = x0.size
    idx_in = list(range(D)) if idx_in is None else list(idx_in)
    h = fd_step_for(x0, fd_step)

    def once(hh):
        Y = np.atleast_2d(fmap(_stencil(x0, idx_in, hh)))
        out = list(range(Y.shape[1])) if idx_out is None else list(idx_out)
        return _central(Y, out, len(idx_in), hh)

    J = once(h)
    if richardson:
        J = (4.0 * once(0.5 * h) - J) / 3.0
    return J


def flow_jacobian(H, x0, t: float, fd_step=None, step: float = DEFAULT_STEP, richardson: bool = False):
    """Central-difference ``D phi_H^t(x0)``; column j perturbs coordinate j by +-fd_step."""
    x0 = np.asarray(x0, dtype=float)
    return map_jacobian(lambda X: integrate_flow(H, X, t, step, track_energy=False).endpoint, x0, fd_step, richardson)


# Poincare maps --------------------------------------------------------------


def section_hits(H: HamiltonianField, X0, level: float = 1.0, slot: int = 0, step: float = DEFAULT_STEP,
                 t_max: float = T_MAX, tol: float = BISECT_TOL, max_bisect: int = MAX_BISECT):
    """Batched first crossings of ``{x_slot = level}`` from below."""
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    hit, tau, status = kernels.rk4_section(H.params, H.d, X0, slot, float(level), step, t_max, tol, max_bisect)
    if np.any(status < 0):
        raise DivergedError("non-finite state before reaching the section")
    if np.any(status == 0):
        raise NoReturn(f"no crossing of x_{slot + 1} = {level} within t_max = {t_max}")
    return hit, tau


def poincare_map(H: HamiltonianField, x0, level: float = 1.0, slot: int = 0, step: float = DEFAULT_STEP,
                 t_max: float = T_MAX, fd_step=None, transversal=None, richardson: bool = False) -> PoincareResult:
    """First-return map from the section through ``x0`` to ``{x_slot = level}``.

    The Jacobian is taken in the transversal coordinates (every coordinate
    of the first 2m except x_1 and y_1), by central differences of the full
    map.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (H.dim,):
        raise DimensionError(f"base point must have length {H.dim}")
    m = H.d
    idx = phi_indices(m - 1) if transversal is None else list(transversal)
    hit0, tau0 = section_hits(H, x0, level, slot, step, t_max)
    taus = []

    def fmap(X):
        Y, tau = section_hits(H, X, level, slot, step, t_max)
        taus.append(tau)
        return Y

    J = map_jacobian(fmap, x0, fd_step, richardson, idx_in=idx, idx_out=idx)
    spread = max((float(np.abs(t - tau0[0]).max()) for t in taus if t.size), default=0.0)
    defect = symplectic_defect(J) if J.shape[0] % 2 == 0 and J.shape[0] == J.shape[1] else float("nan")
    return PoincareResult(hit0[0], float(tau0[0]), J, float(abs(hit0[0, slot] - level)), defect, spread)
