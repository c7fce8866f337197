"""Hamiltonian fields: the normal form, rotation generators, transit and
chained Hamiltonians, support rescaling and quadratic test fields.

All generated fields share one layout (see ``_kernels_py``): a linear part,
an optional quadratic part and a list of bump terms composed with affine
maps.  Values and gradients go through the selected kernel backend; the
Hessian is evaluated in numpy.

Sign convention: X_H = J_hat grad H with J = [[0, -I], [I, 0]], so
x' = -dH/dy and y' = dH/dx.  The normal form whose field is the unit
translation e_{x_1} is therefore H0 = -y_1, and a rotation generator
K_i = alpha l(rho) rho_i turns the (x_i, y_i) plane counterclockwise.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import expm

from . import kernels
from .bump import ell, ell_d1, ell_d2
from .core import embed_Phi, is_symplectic, symplectic_defect
from .errors import DimensionError, DomainError

# 1 / int_0^1 l(2s - 1) ds: makes the rotation angle accumulated by one
# transit through the slab equal to alpha
TRANSIT_GAIN = 2.0

K_TERM, TRANSIT_TERM = 0, 1
# |u| beyond which a term vanishes: rho >= 1 for K; for transit terms
# x_1 in (0, 1), |y_1| < 1 and rho_q < 1 give |u|^2 < 1 + 1 + 2
_TERM_RADIUS = {K_TERM: math.sqrt(2.0), TRANSIT_TERM: 2.0}


@dataclass(eq=False)
class HamiltonianField:
    """``H(p) = c.p + 1/2 p^T Q p + sum_t amp_t F_t(M_t p + b_t)`` on R^{2d+n}."""

    d: int
    n: int
    kind: str
    linear: np.ndarray
    quad: np.ndarray | None = None
    M: np.ndarray | None = None
    b: np.ndarray | None = None
    amp: np.ndarray | None = None
    alpha: np.ndarray | None = None
    tkind: np.ndarray | None = None
    slots: np.ndarray | None = None
    qmask: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        D = self.dim
        self.linear = np.asarray(self.linear, dtype=float).reshape(D)
        T = 0 if self.amp is None else len(self.amp)
        self.M = np.zeros((0, D, D)) if T == 0 else np.asarray(self.M, dtype=float).reshape(T, D, D)
        self.b = np.zeros((0, D)) if T == 0 else np.asarray(self.b, dtype=float).reshape(T, D)
        self.amp = np.asarray(self.amp if T else [], dtype=float)
        self.alpha = np.asarray(self.alpha if T else [], dtype=float)
        self.tkind = np.asarray(self.tkind if T else [], dtype=np.int64)
        self.slots = np.zeros((0, 4), dtype=np.int64) if T == 0 else np.asarray(self.slots, dtype=np.int64).reshape(T, 4)
        self.qmask = np.zeros((0, D)) if T == 0 else np.asarray(self.qmask, dtype=float).reshape(T, D)
        if self.quad is not None:
            Q = np.asarray(self.quad, dtype=float).reshape(D, D)
            self.quad = 0.5 * (Q + Q.T)

    @property
    def dim(self) -> int:
        return 2 * self.d + self.n

    @property
    def n_terms(self) -> int:
        return len(self.amp)

    @cached_property
    def params(self):
        has_quad = self.quad is not None
        Q = self.quad if has_quad else np.zeros((self.dim, self.dim))
        return (self.linear, Q, has_quad, self.M, self.b, self.amp, self.alpha, self.tkind, self.slots, self.qmask)

    def _points(self, p):
        P = np.asarray(p, dtype=float)
        single = P.ndim == 1
        P = np.atleast_2d(P)
        if P.shape[-1] != self.dim:
            raise DimensionError(f"field lives on R^{self.dim}, got points of length {P.shape[-1]}")
        return P, single

    def value(self, p):
        P, single = self._points(p)
        v = kernels.field_value(self.params, P)
        return float(v[0]) if single else v

    __call__ = value

    def gradient(self, p):
        P, single = self._points(p)
        g = kernels.field_gradient(self.params, P)
        return g[0] if single else g

    def vector_field(self, p):
        P, single = self._points(p)
        X = kernels.vector_field(self.params, self.d, P)
        return X[0] if single else X

    def hessian(self, p):
        P, single = self._points(p)
        B, D = P.shape
        out = np.zeros((B, D, D))
        if self.quad is not None:
            out += self.quad
        for t in range(self.n_terms):
            U = P @ self.M[t].T + self.b[t]
            Hu = _term_hessian(self, t, U)
            out += self.amp[t] * np.einsum("ki,bkl,lj->bij", self.M[t], Hu, self.M[t])
        return out[0] if single else out

    def linear_value(self, p):
        P, single = self._points(p)
        v = P @ self.linear
        if self.quad is not None:
            v = v + 0.5 * np.einsum("bi,ij,bj->b", P, self.quad, P)
        return float(v[0]) if single else v

    def bump_rate(self) -> float:
        """Speed of the fastest transit bump argument ``2 u_gx - 1`` per unit x_1.

        1 for fields without transit terms.  A chain of N slabs rescaled by s
        has rate 2N/s.
        """
        rate = 1.0
        for t in range(self.n_terms):
            if int(self.tkind[t]) == TRANSIT_TERM:
                rate = max(rate, 2.0 * abs(float(self.M[t][int(self.slots[t][0]), 0])))
        return rate

    def support_radius(self) -> float:
        """Euclidean radius outside which every bump term vanishes identically."""
        r = 0.0
        for t in range(self.n_terms):
            Minv = np.linalg.pinv(self.M[t])
            r = max(r, np.linalg.norm(Minv, 2) * (_TERM_RADIUS[int(self.tkind[t])] + np.linalg.norm(self.b[t])))
        return float(r)

    def exact_flow(self, t: float, p):
        """Exact flow for fields without bump terms (affine vector field)."""
        if self.n_terms:
            raise DomainError("exact flow is only available for linear/quadratic fields")
        P, single = self._points(p)
        A = _hat_matrix(self.d, self.n)
        D = self.dim
        Q = self.quad if self.quad is not None else np.zeros((D, D))
        aug = np.zeros((D + 1, D + 1))
        aug[:D, :D] = A @ Q
        aug[:D, D] = A @ self.linear
        E = expm(t * aug)
        out = P @ E[:D, :D].T + E[:D, D]
        return out[0] if single else out

    def to_descriptor(self) -> dict:
        return dict(self.meta)

    def to_json(self) -> str:
        return json.dumps(self.to_descriptor(), sort_keys=True)


def _hat_matrix(d, n):
    from .core import structure_matrix

    return structure_matrix(d, n)


def _term_hessian(H: HamiltonianField, t: int, U):
    gx, gy, ix, iy = (int(s) for s in H.slots[t])
    a = H.alpha[t]
    qm = H.qmask[t]
    B, D = U.shape
    q = U * qm
    rho = 0.5 * np.einsum("bi,bi->b", q, q)
    rho_i = 0.5 * (U[:, ix] ** 2 + U[:, iy] ** 2)
    l0, l1, l2 = (np.asarray(f(rho)) for f in (ell, ell_d1, ell_d2))
    w = np.zeros_like(U)
    w[:, ix], w[:, iy] = U[:, ix], U[:, iy]
    Ei = np.zeros(D)
    Ei[ix] = Ei[iy] = 1.0
    K = a * l0 * rho_i
    gK = a * ((l1 * rho_i)[:, None] * q + l0[:, None] * w)
    HK = a * (
        (l2 * rho_i)[:, None, None] * np.einsum("bi,bj->bij", q, q)
        + l1[:, None, None] * (np.einsum("bi,bj->bij", q, w) + np.einsum("bi,bj->bij", w, q))
        + (l1 * rho_i)[:, None, None] * np.diag(qm)
        + l0[:, None, None] * np.diag(Ei)
    )
    if H.tkind[t] != TRANSIT_TERM:
        return HK
    sx = 2.0 * U[:, gx] - 1.0
    fx, dfx, ddfx = np.asarray(ell(sx)), 2.0 * np.asarray(ell_d1(sx)), 4.0 * np.asarray(ell_d2(sx))
    fy, dfy, ddfy = (np.asarray(f(U[:, gy])) for f in (ell, ell_d1, ell_d2))
    ex = np.zeros(D)
    ex[gx] = 1.0
    ey = np.zeros(D)
    ey[gy] = 1.0
    out = (fx * fy)[:, None, None] * HK
    sym = lambda e, g: np.einsum("i,bj->bij", e, g) + np.einsum("bi,j->bij", g, e)  # noqa: E731
    out += (dfx * fy)[:, None, None] * sym(ex, gK)
    out += (fx * dfy)[:, None, None] * sym(ey, gK)
    out += (ddfx * fy * K)[:, None, None] * np.outer(ex, ex)
    out += (fx * ddfy * K)[:, None, None] * np.outer(ey, ey)
    out += (dfx * dfy * K)[:, None, None] * (np.outer(ex, ey) + np.outer(ey, ex))
    return out


def _check_dims(d, n):
    if int(d) != d or d < 1:
        raise DomainError(f"rank d must be a positive integer, got {d}")
    if int(n) != n or n < 0:
        raise DomainError(f"transverse dimension n must be >= 0, got {n}")


def _check_plane(i, d):
    if int(i) != i or not 1 <= i <= d:
        raise DomainError(f"plane index {i} out of range 1..{d}")


def normal_form_hamiltonian(d: int, n: int = 0) -> HamiltonianField:
    """``H0 = -y_1`` on R^{2d+n}; its field is the unit vector e_{x_1}."""
    _check_dims(d, n)
    c = np.zeros(2 * d + n)
    c[d] = -1.0
    return HamiltonianField(d, n, "normal", c, meta={"kind": "normal", "d": d, "n": n})


def make_rotation_hamiltonian(alpha: float, i: int, d: int, n: int = 0) -> HamiltonianField:
    """``K_i = alpha l(rho) rho_i`` with rho = |p|^2/2 and rho_i = (x_i^2 + y_i^2)/2."""
    _check_dims(d, n)
    _check_plane(i, d)
    D = 2 * d + n
    return HamiltonianField(
        d,
        n,
        "K",
        np.zeros(D),
        M=np.eye(D)[None],
        b=np.zeros((1, D)),
        amp=[1.0],
        alpha=[float(alpha)],
        tkind=[K_TERM],
        slots=[[0, 0, i - 1, d + i - 1]],
        qmask=np.ones((1, D)),
        meta={"kind": "K", "d": d, "n": n, "alpha": float(alpha), "i": int(i)},
    )


def _transit_layout(i, d, n):
    m = d + 1
    D = 2 * m + n
    qmask = np.ones(D)
    qmask[0] = qmask[m] = 0.0
    return [0, m, i, m + i], qmask


def make_transit_hamiltonian(alpha: float, i: int, d: int, n: int = 0, with_normal_form: bool = False) -> HamiltonianField:
    """``2 l(2x_1 - 1) l(y_1) K_i(x_hat, y_hat, z)`` on R^{2(d+1)+n}.

    The enlarged space has coordinates (x_1, x_hat, y_1, y_hat, z) with
    x_hat, y_hat in R^d.  With ``with_normal_form`` the normal form -y_1 is
    added, giving the single-transit Hamiltonian.
    """
    _check_dims(d, n)
    _check_plane(i, d)
    m = d + 1
    D = 2 * m + n
    slots, qmask = _transit_layout(i, d, n)
    c = np.zeros(D)
    if with_normal_form:
        c[m] = -1.0
    return HamiltonianField(
        m,
        n,
        "transit",
        c,
        M=np.eye(D)[None],
        b=np.zeros((1, D)),
        amp=[TRANSIT_GAIN],
        alpha=[float(alpha)],
        tkind=[TRANSIT_TERM],
        slots=[slots],
        qmask=qmask[None],
        meta={"kind": "transit", "d": d, "n": n, "alpha": float(alpha), "i": int(i), "with_normal_form": bool(with_normal_form)},
    )


def make_chained_hamiltonian(factors, d: int, n: int = 0, tol: float = 1e-9) -> HamiltonianField:
    """``H0 + N sum_k Ht_{i(k)}(Phi(P_k) T_k p)`` with ``T_k`` mapping x_1 to N x_1 - k + 1.

    ``factors`` is a sequence of ``(P_k, i_k, alpha_k)``; slab k occupies
    x_1 in [(k-1)/N, k/N].  With ``Phi(P)`` applied to the coordinates the
    slab's linear transit map is ``Phi(P_k)^-1 pi_i(R_alpha) Phi(P_k)``.
    """
    _check_dims(d, n)
    factors = [(np.asarray(P, dtype=float), int(i), float(a)) for P, i, a in factors]
    if not factors:
        raise DomainError("chained Hamiltonian needs at least one factor")
    m = d + 1
    D = 2 * m + n
    N = len(factors)
    Ms, bs, alphas, slots, qmasks = [], [], [], [], []
    for k, (P, i, a) in enumerate(factors, start=1):
        if P.shape != (2 * d, 2 * d):
            raise DimensionError(f"factor {k}: conjugator must be {2 * d}x{2 * d}, got {P.shape}")
        if not is_symplectic(P, tol=tol):
            raise DomainError(f"factor {k}: conjugator is not symplectic (defect {symplectic_defect(P):.3e})")
        _check_plane(i, d)
        T = np.eye(D)
        T[0, 0] = N
        Phi = embed_Phi(P, n)
        Ms.append(Phi @ T)
        shift = np.zeros(D)
        shift[0] = -(k - 1.0)
        bs.append(Phi @ shift)
        alphas.append(a)
        sl, qm = _transit_layout(i, d, n)
        slots.append(sl)
        qmasks.append(qm)
    c = np.zeros(D)
    c[m] = -1.0
    meta = {
        "kind": "chained",
        "d": d,
        "n": n,
        "factors": [{"P_rows": P.tolist(), "i": i, "alpha": a} for P, i, a in factors],
    }
    return HamiltonianField(
        m, n, "chained", c, M=Ms, b=bs, amp=np.full(N, N * TRANSIT_GAIN), alpha=alphas,
        tkind=np.full(N, TRANSIT_TERM), slots=slots, qmask=qmasks, meta=meta,
    )


def pullback(H: HamiltonianField, A, scale: float = 1.0, kind: str = "pullback", meta: dict | None = None) -> HamiltonianField:
    """``p -> scale * H(A p)`` for a square matrix ``A``."""
    A = np.asarray(A, dtype=float)
    D = H.dim
    if A.shape != (D, D):
        raise DimensionError(f"pullback matrix must be {D}x{D}, got {A.shape}")
    quad = None if H.quad is None else scale * (A.T @ H.quad @ A)
    out = HamiltonianField(
        H.d, H.n, kind, scale * (A.T @ H.linear), quad=quad,
        M=H.M @ A if H.n_terms else None, b=H.b.copy() if H.n_terms else None,
        amp=scale * H.amp if H.n_terms else None, alpha=H.alpha.copy() if H.n_terms else None,
        tkind=H.tkind.copy() if H.n_terms else None, slots=H.slots.copy() if H.n_terms else None,
        qmask=H.qmask.copy() if H.n_terms else None,
        meta=meta if meta is not None else {"kind": kind, "matrix": A.tolist(), "scale": float(scale), "base": H.to_descriptor()},
    )
    return out


def rescale_support(H: HamiltonianField, rho: float) -> HamiltonianField:
    """``p -> rho * H(p / rho)``; supports shrink by ``rho`` and flows change time by ``1/rho``."""
    rho = float(rho)
    if not rho > 0:
        raise DomainError(f"rescale factor must be positive, got {rho}")
    if rho == 1.0:
        return H
    meta = {"kind": "rescaled", "rho": rho, "base": H.to_descriptor()}
    out = pullback(H, np.eye(H.dim) / rho, rho, kind="rescaled", meta=meta)
    # a linear function is invariant; copy it so it stays bit-identical
    out.linear = H.linear.copy()
    if H.quad is not None:
        out.quad = H.quad / rho
    out.__dict__.pop("params", None)
    return out


def add_fields(*fields_: HamiltonianField) -> HamiltonianField:
    """Sum of fields on the same space."""
    first = fields_[0]
    for f in fields_[1:]:
        if (f.d, f.n) != (first.d, first.n):
            raise DimensionError("fields live on different spaces")
    quads = [f.quad for f in fields_ if f.quad is not None]
    with_terms = [f for f in fields_ if f.n_terms]

    def cat(name):
        return np.concatenate([getattr(f, name) for f in with_terms]) if with_terms else None

    return HamiltonianField(
        first.d, first.n, "sum", sum(f.linear for f in fields_), quad=sum(quads) if quads else None,
        M=cat("M"), b=cat("b"), amp=cat("amp"), alpha=cat("alpha"), tkind=cat("tkind"), slots=cat("slots"),
        qmask=cat("qmask"), meta={"kind": "sum", "parts": [f.to_descriptor() for f in fields_]},
    )


def quadratic_hamiltonian(linear, quad, d: int, n: int = 0) -> HamiltonianField:
    """``c.p + 1/2 p^T Q p``; its flow is affine and available in closed form."""
    _check_dims(d, n)
    D = 2 * d + n
    c = np.asarray(linear, dtype=float).reshape(D)
    Q = None if quad is None else np.asarray(quad, dtype=float).reshape(D, D)
    meta = {"kind": "quadratic", "d": d, "n": n, "linear": c.tolist(),
            "quad": None if Q is None else (0.5 * (Q + Q.T)).tolist()}
    return HamiltonianField(d, n, "quadratic", c, quad=Q, meta=meta)


def field_from_descriptor(desc: dict) -> HamiltonianField:
    kind = desc.get("kind")
    if kind == "normal":
        return normal_form_hamiltonian(desc["d"], desc.get("n", 0))
    if kind == "K":
        return make_rotation_hamiltonian(desc["alpha"], desc["i"], desc["d"], desc.get("n", 0))
    if kind == "transit":
        return make_transit_hamiltonian(desc["alpha"], desc["i"], desc["d"], desc.get("n", 0), desc.get("with_normal_form", False))
    if kind == "chained":
        facs = [(f["P_rows"], f["i"], f["alpha"]) for f in desc["factors"]]
        return make_chained_hamiltonian(facs, desc["d"], desc.get("n", 0))
    if kind == "rescaled":
        return rescale_support(field_from_descriptor(desc["base"]), desc["rho"])
    if kind == "pullback":
        return pullback(field_from_descriptor(desc["base"]), desc["matrix"], desc.get("scale", 1.0))
    if kind == "sum":
        return add_fields(*(field_from_descriptor(p) for p in desc["parts"]))
    if kind == "quadratic":
        return quadratic_hamiltonian(desc["linear"], desc["quad"], desc["d"], desc.get("n", 0))
    raise DomainError(f"unknown field kind {kind!r}")
