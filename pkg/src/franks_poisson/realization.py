"""End-to-end realizations.

Discrete: for a Poisson map f, a point p and a near-identity symplectic
target A_hat, build g = phi^-1 o h o phi o f with h = h_1 o ... o h_M, each
h_m a rescaled rotation generator conjugated by its factor's conjugator, so
that D_p g = A_hat_pi D_p f and g = f away from p.

Continuous: for a target A_hat, build the chained Hamiltonian H' whose
Poincare map from {x_1 = 0} to {x_1 = 1} has derivative A_hat at 0 and
whose field equals X_{H0} off a small tube and along the orbit of 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    c1_norm,
    c2_norm,
    is_symplectic,
    lift_A_pi,
    poisson_blocks,
    poisson_defect,
    symplectic_inverse,
)
from .errors import ChartError, DimensionError, DomainError
from .factorization import EPS0, Factorization, decompose_near_identity
from .fields import (
    HamiltonianField,
    make_chained_hamiltonian,
    make_rotation_hamiltonian,
    normal_form_hamiltonian,
    pullback,
    rescale_support,
)
from .flows import (DEFAULT_STEP, PoincareResult, closed_form_K_flow, closed_form_K_jacobian, map_jacobian, poincare_map,
                    resolved_step)

# base maps ----------------------------------------------------------------


class PoissonMap:
    """Batched map on R^{2d+n}; subclasses implement ``_apply``."""

    name = "map"

    def __init__(self, d: int, n: int = 0):
        self.d, self.n = int(d), int(n)

    @property
    def dim(self) -> int:
        return 2 * self.d + self.n

    def __call__(self, X):
        P = np.asarray(X, dtype=float)
        single = P.ndim == 1
        P = np.atleast_2d(P)
        if P.shape[1] != self.dim:
            raise DimensionError(f"map acts on R^{self.dim}, got length {P.shape[1]}")
        out = self._apply(P)
        return out[0] if single else out

    def jacobian(self, x, fd_step=None):
        return map_jacobian(self, np.asarray(x, dtype=float), fd_step)

    def jacobians(self, X):
        """Jacobians at every row of ``X``, shape (B, D, D)."""
        return np.stack([self.jacobian(x) for x in np.atleast_2d(X)])

    def descriptor(self) -> dict:
        return {"kind": self.name, "d": self.d, "n": self.n}


class IdentityMap(PoissonMap):
    name = "identity"

    def _apply(self, P):
        return P.copy()

    def jacobian(self, x, fd_step=None):
        return np.eye(self.dim)

    def jacobians(self, X):
        return np.broadcast_to(np.eye(self.dim), (len(np.atleast_2d(X)), self.dim, self.dim)).copy()


class TranslationMap(PoissonMap):
    name = "translation"

    def __init__(self, v, d: int, n: int = 0):
        super().__init__(d, n)
        self.v = np.asarray(v, dtype=float).reshape(self.dim)

    def _apply(self, P):
        return P + self.v

    def jacobian(self, x, fd_step=None):
        return np.eye(self.dim)

    def jacobians(self, X):
        return np.broadcast_to(np.eye(self.dim), (len(np.atleast_2d(X)), self.dim, self.dim)).copy()

    def descriptor(self):
        return {**super().descriptor(), "v": self.v.tolist()}


class LinearPoissonMap(PoissonMap):
    """``x -> B x + v`` with B in the linear Poisson group."""

    name = "linear"

    def __init__(self, B, d: int, n: int = 0, v=None, tol: float = 1e-9):
        super().__init__(d, n)
        self.B = np.asarray(B, dtype=float).reshape(self.dim, self.dim)
        if poisson_defect(self.B, d, n) > tol or np.abs(self.B[2 * d :, : 2 * d]).max(initial=0.0) > tol:
            raise DomainError("matrix is not in the linear Poisson group")
        self.v = np.zeros(self.dim) if v is None else np.asarray(v, dtype=float).reshape(self.dim)

    def _apply(self, P):
        return P @ self.B.T + self.v

    def jacobian(self, x, fd_step=None):
        return self.B.copy()

    def jacobians(self, X):
        return np.broadcast_to(self.B, (len(np.atleast_2d(X)), self.dim, self.dim)).copy()

    def descriptor(self):
        return {**super().descriptor(), "B": self.B.tolist(), "v": self.v.tolist()}


class KFlowMap(PoissonMap):
    """Time-t flow of K_i, a nonlinear Poisson diffeomorphism."""

    name = "kflow"

    def __init__(self, alpha: float, i: int, d: int, n: int = 0, t: float = 1.0):
        super().__init__(d, n)
        make_rotation_hamiltonian(alpha, i, d, n)  # validates the arguments
        self.alpha, self.i, self.t = float(alpha), int(i), float(t)

    def _apply(self, P):
        return closed_form_K_flow(self.alpha, self.i, self.t, P, self.d)

    def jacobian(self, x, fd_step=None):
        if fd_step is not None:
            return super().jacobian(x, fd_step)
        return self.jacobians(np.asarray(x, dtype=float)[None])[0]

    def jacobians(self, X):
        return closed_form_K_jacobian(self.alpha, self.i, self.t, np.atleast_2d(X), self.d)

    def descriptor(self):
        return {**super().descriptor(), "alpha": self.alpha, "i": self.i, "t": self.t}


class ComposedMap(PoissonMap):
    """``maps[-1] o ... o maps[0]``."""

    name = "composed"

    def __init__(self, maps):
        maps = list(maps)
        if not maps:
            raise DomainError("composition needs at least one map")
        super().__init__(maps[0].d, maps[0].n)
        if any((m.d, m.n) != (self.d, self.n) for m in maps):
            raise DimensionError("composed maps live on different spaces")
        self.maps = maps

    def _apply(self, P):
        for m in self.maps:
            P = m(P)
        return P

    def jacobian(self, x, fd_step=None):
        if fd_step is not None:
            return super().jacobian(x, fd_step)
        return self.jacobians(np.asarray(x, dtype=float)[None])[0]

    def jacobians(self, X):
        P = np.atleast_2d(np.asarray(X, dtype=float))
        out = None
        for m in self.maps:
            Jm = m.jacobians(P)
            out = Jm if out is None else Jm @ out
            P = m(P)
        return out

    def descriptor(self):
        return {**super().descriptor(), "maps": [m.descriptor() for m in self.maps]}


def map_from_descriptor(desc: dict) -> PoissonMap:
    kind, d, n = desc["kind"], desc["d"], desc.get("n", 0)
    if kind == "identity":
        return IdentityMap(d, n)
    if kind == "translation":
        return TranslationMap(desc["v"], d, n)
    if kind == "linear":
        return LinearPoissonMap(desc["B"], d, n, desc.get("v"))
    if kind == "kflow":
        return KFlowMap(desc["alpha"], desc["i"], d, n, desc.get("t", 1.0))
    if kind == "composed":
        return ComposedMap([map_from_descriptor(m) for m in desc["maps"]])
    raise DomainError(f"unknown map kind {kind!r}")


# discrete realization -------------------------------------------------------


@dataclass(eq=False)
class PerturbedMap:
    """``g = phi^-1 o h o phi o f`` with ``phi(y) = C (y - f(p))``."""

    base: PoissonMap
    p: np.ndarray
    fp: np.ndarray
    chart: np.ndarray
    target: np.ndarray
    factorization: Factorization
    rho: float
    scale: float
    jac_f: np.ndarray
    generators: list = field(default_factory=list)  # (factor, C_pi, C_pi^-1)

    @property
    def d(self) -> int:
        return self.base.d

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def target_jacobian(self) -> np.ndarray:
        """``A_hat_pi D_p f``."""
        return lift_A_pi(self.target, self.n) @ self.jac_f

    def h(self, U):
        """Apply ``h = h_1 o ... o h_M`` to rows of ``U`` (chart coordinates).

        Rows outside a generator's support are returned untouched, bit for bit.
        """
        out = np.array(U, dtype=float, ndmin=2)
        s = self.scale
        for fac, Cpi, Cinv in reversed(self.generators):
            V = out @ Cinv.T / s
            inside = 0.5 * np.einsum("bi,bi->b", V, V) < 1.0
            if not inside.any():
                continue
            W = closed_form_K_flow(fac.angle, fac.k, 1.0, V[inside], self.d)
            out[inside] = s * (W @ Cpi.T)
        return out

    def __call__(self, X):
        P = np.asarray(X, dtype=float)
        single = P.ndim == 1
        P = np.atleast_2d(P)
        FX = np.atleast_2d(self.base(P))
        out = FX.copy()
        U = (FX - self.fp) @ self.chart.T
        near = np.einsum("bi,bi->b", U, U) < self.rho**2
        if near.any():
            Un = U[near]
            Vn = self.h(Un)
            moved = np.any(Vn != Un, axis=1)
            if moved.any():
                rows = np.flatnonzero(near)[moved]
                out[rows] = np.linalg.solve(self.chart, Vn[moved].T).T + self.fp
        return out[0] if single else out

    def jacobian(self, x, fd_step=None):
        """Exact Jacobian; pass ``fd_step`` for a central-difference estimate."""
        if fd_step is not None:
            return map_jacobian(self, np.asarray(x, dtype=float), fd_step)
        return self.jacobians(np.asarray(x, dtype=float)[None])[0]

    def jacobians(self, X):
        """Exact Jacobians of g at rows of ``X``: chain rule through the closed-form generator flows."""
        P = np.atleast_2d(np.asarray(X, dtype=float))
        FX = np.atleast_2d(self.base(P))
        out = self.base.jacobians(P)
        U = (FX - self.fp) @ self.chart.T
        near = np.flatnonzero(np.einsum("bi,bi->b", U, U) < self.rho**2)
        if near.size == 0:
            return out
        _, Dh = self.h_with_jacobians(U[near])
        out[near] = np.linalg.inv(self.chart) @ Dh @ self.chart @ out[near]
        return out

    def h_with_jacobians(self, U):
        """``h(U)`` and its exact Jacobians, chaining ``D h_k = C_pi D phi_K C_pi^-1``
        (the scale cancels) through the closed-form generator flows."""
        cur = np.array(U, dtype=float, ndmin=2)
        Dh = np.broadcast_to(np.eye(self.dim), (cur.shape[0], self.dim, self.dim)).copy()
        s = self.scale
        for fac, Cpi, Cinv in reversed(self.generators):
            V = cur @ Cinv.T / s
            inside = 0.5 * np.einsum("bi,bi->b", V, V) < 1.0
            if not inside.any():
                continue
            Vi = V[inside]
            cur[inside] = s * (closed_form_K_flow(fac.angle, fac.k, 1.0, Vi, self.d) @ Cpi.T)
            DK = closed_form_K_jacobian(fac.angle, fac.k, 1.0, Vi, self.d)
            Dh[inside] = Cpi @ DK @ Cinv @ Dh[inside]
        return cur, Dh

    def support_contains(self, X):
        """Rows of ``X`` where g may differ from f."""
        FX = np.atleast_2d(self.base(np.atleast_2d(X)))
        U = (FX - self.fp) @ self.chart.T
        return np.einsum("bi,bi->b", U, U) < self.rho**2

    def generator_fields(self) -> list[HamiltonianField]:
        """Hamiltonians whose time-1 flows are h_1, ..., h_M in chart coordinates."""
        out = []
        s = self.scale
        for fac, _, Cinv in self.generators:
            K = make_rotation_hamiltonian(fac.angle, fac.k, self.d, self.n)
            out.append(pullback(K, Cinv / s, s * s))
        return out

    def descriptor(self) -> dict:
        return {
            "kind": "perturbed_map",
            "base": self.base.descriptor(),
            "p": self.p.tolist(),
            "chart": self.chart.tolist(),
            "target": self.target.tolist(),
            "rho": self.rho,
            "scale": self.scale,
            "factorization": self.factorization.to_dict(),
        }


def _lift(M, n):
    return lift_A_pi(M, n)


def realize_discrete(f: PoissonMap, jac_f_at_p, p, target, rho: float, chart=None, eps0: float = EPS0) -> PerturbedMap:
    """Perturb ``f`` near ``p`` so that ``D_p g = A_hat_pi D_p f``.

    The chart is ``phi(y) = C (y - f(p))`` for a linear Poisson ``C``
    (identity by default).  The generators are supported in the ball of
    radius ``rho`` around 0 in chart coordinates.
    """
    d, n = f.d, f.n
    D = f.dim
    p = np.asarray(p, dtype=float).reshape(D)
    target = np.asarray(target, dtype=float)
    if target.shape != (2 * d, 2 * d):
        raise DimensionError(f"target must be {2 * d}x{2 * d}")
    if not is_symplectic(target, tol=1e-9):
        raise DomainError("target is not symplectic")
    if not rho > 0:
        raise DomainError(f"rho must be positive, got {rho}")
    C = np.eye(D) if chart is None else np.asarray(chart, dtype=float)
    if C.shape != (D, D):
        raise ChartError(f"chart matrix must be {D}x{D}")
    if not np.isfinite(np.linalg.cond(C)) or np.linalg.cond(C) > 1e12:
        raise ChartError("chart matrix is singular")
    if poisson_defect(C, d, n) > 1e-9 or np.abs(C[2 * d :, : 2 * d]).max(initial=0.0) > 1e-12:
        raise ChartError("chart matrix is not a linear Poisson map")
    Cs, a, _ = poisson_blocks(C, d, n)
    if np.abs(a).max(initial=0.0) > 0.0:
        raise ChartError("chart with a nonzero coupling block: C A_pi C^-1 is not a lift of a symplectic matrix")
    A = Cs @ target @ symplectic_inverse(Cs)
    fac = decompose_near_identity(A, eps0)
    jac = np.asarray(jac_f_at_p, dtype=float) if jac_f_at_p is not None else f.jacobian(p)
    gens = []
    cmax = 1.0
    for factor in fac.active:
        Cpi = _lift(factor.conjugator, n)
        gens.append((factor, Cpi, _lift(symplectic_inverse(factor.conjugator), n)))
        cmax = max(cmax, np.linalg.norm(factor.conjugator, 2))
    # K vanishes for |v| >= sqrt(2); |C_m^-1 u / s| >= sqrt(2) once |u| >= sqrt(2) s |C_m|
    scale = rho / (math.sqrt(2.0) * cmax)
    return PerturbedMap(f, p, np.asarray(f(p), dtype=float), C, target, fac, float(rho), scale, jac, gens)


# continuous realization -----------------------------------------------------


@dataclass(eq=False)
class PerturbedHamiltonian:
    field: HamiltonianField
    scale: float
    target: np.ndarray
    factorization: Factorization
    slabs: list  # (Q_k, i_k, alpha_k) in chain order
    tube_radius: float  # bound on |(x_hat, y_hat, z)| inside the tube, before scaling
    d: int
    n: int

    @property
    def normal_form(self) -> HamiltonianField:
        return normal_form_hamiltonian(self.d + 1, self.n)

    def in_tube(self, X):
        """Rows where X_{H'} may differ from X_{H0}: 0 < x_1 < s, |y_1| < s, |q| < s r."""
        P = np.atleast_2d(np.asarray(X, dtype=float))
        m = self.d + 1
        s = self.scale
        q = np.delete(P, [0, m], axis=1)
        return (P[:, 0] > 0) & (P[:, 0] < s) & (np.abs(P[:, m]) < s) & (np.linalg.norm(q, axis=1) < s * self.tube_radius)

    def generator_difference(self, X):
        """``X_{H'} - X_{H0}`` at rows of ``X`` (exact zeros off the tube)."""
        return self.field.vector_field(np.atleast_2d(X)) - self.normal_form.vector_field(np.atleast_2d(X))

    def poincare(self, step: float = DEFAULT_STEP, fd_step=None, richardson: bool = False) -> PoincareResult:
        """Poincare map of H' from {x_1 = 0} to {x_1 = 1} at the origin.

        ``step`` is measured in units of the fastest bump argument (see
        ``resolved_step``), i.e. ``step * s / (2N)`` in time for N slabs.
        """
        return poincare_map(self.field, np.zeros(self.field.dim), level=1.0, step=resolved_step(self.field, step),
                            fd_step=fd_step, richardson=richardson)

    def descriptor(self) -> dict:
        return {
            "kind": "perturbed_hamiltonian",
            "d": self.d,
            "n": self.n,
            "scale": self.scale,
            "target": self.target.tolist(),
            "field": self.field.to_descriptor(),
            "factorization": self.factorization.to_dict(),
        }


def realize_continuous(target, rho: float, d: int | None = None, n: int = 0, eps0: float = EPS0) -> PerturbedHamiltonian:
    """Chained Hamiltonian on R^{2(d+1)+n} realizing ``target`` as ``D_0 P_{H'}``.

    Factors A = A_1 ... A_M with A_m = C_m R_m C_m^-1.  Slab k of the chain
    realizes Q_k^-1 R Q_k, and the Poincare derivative is the product of the
    slab maps in reverse slab order, so slab k uses Q_k = C_{M+1-k}^-1.
    """
    target = np.asarray(target, dtype=float)
    if d is None:
        d = target.shape[0] // 2
    if target.shape != (2 * d, 2 * d):
        raise DimensionError(f"target must be {2 * d}x{2 * d}")
    if not rho > 0:
        raise DomainError(f"rho must be positive, got {rho}")
    fac = decompose_near_identity(target, eps0)
    active = fac.active
    if not active:
        H = normal_form_hamiltonian(d + 1, n)
        return PerturbedHamiltonian(H, 1.0, target, fac, [], 0.0, d, n)
    slabs = []
    rmax = 1.0
    for factor in reversed(active):
        Q = symplectic_inverse(factor.conjugator)
        slabs.append((Q, factor.k, factor.angle))
        rmax = max(rmax, np.linalg.norm(factor.conjugator, 2))
    chained = make_chained_hamiltonian(slabs, d, n)
    tube_radius = math.sqrt(2.0) * rmax
    # the tube sits in x_1 in [0,1], |y_1| < 1, |q| < sqrt(2) max|Q^-1|
    support = math.sqrt(2.0 + tube_radius**2)
    scale = min(1.0, rho / support)
    H = rescale_support(chained, scale)
    return PerturbedHamiltonian(H, scale, target, fac, slabs, tube_radius, d, n)


# sizes ----------------------------------------------------------------------


def sample_ball(rng, count: int, dim: int, radius: float):
    """Uniform samples in the Euclidean ball, with the centre as the first row."""
    G = rng.standard_normal((count, dim))
    G /= np.linalg.norm(G, axis=1, keepdims=True)
    r = radius * rng.uniform(0, 1, count) ** (1.0 / dim)
    out = G * r[:, None]
    out[0] = 0.0
    return out


def h_minus_id_c1(pm: PerturbedMap, samples) -> float:
    """``||h - id||_{C1}`` on the chart-coordinate samples (exact derivatives)."""
    U = np.atleast_2d(np.asarray(samples, dtype=float))
    hU, Dh = pm.h_with_jacobians(U)
    return c1_norm(hU - U, Dh - np.eye(U.shape[1]))


def perturbation_size(obj, samples=None, rng=None, count: int = 1000) -> dict:
    """Measured size of the perturbation on a sample grid covering its support.

    For a ``PerturbedMap``: ``||g - f||_{C1}`` on preimage samples and
    ``||h - id||_{C1}`` in chart coordinates.  For a ``PerturbedHamiltonian``:
    ``||H' - H0||_{C2}`` with the bound expression ``N^2 max(max(1,|P|^2)|alpha|)``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    if isinstance(obj, PerturbedMap):
        U = sample_ball(rng, count, obj.dim, obj.rho) if samples is None else np.atleast_2d(samples)
        if not obj.generators:
            return {"g_minus_f_c1": 0.0, "h_minus_id_c1": 0.0, "samples": int(U.shape[0])}
        hnorm = h_minus_id_c1(obj, U)
        # g - f lives on the preimage of the support; sample a ball around p
        # whose linearized image covers it
        pre = obj.rho * np.linalg.norm(np.linalg.inv(obj.chart @ obj.jac_f), 2)
        X = obj.p + sample_ball(rng, min(count, 200), obj.dim, pre)
        vals = obj(X) - obj.base(X)
        jac = obj.jacobians(X) - obj.base.jacobians(X)
        gnorm = c1_norm(vals, jac)
        return {"g_minus_f_c1": gnorm, "h_minus_id_c1": hnorm, "samples": int(U.shape[0])}
    if isinstance(obj, PerturbedHamiltonian):
        H = obj.field
        if samples is None:
            m = obj.d + 1
            X = sample_ball(rng, count, H.dim, obj.scale * obj.tube_radius)
            X[:, 0] = rng.uniform(0, obj.scale, count)
            X[:, m] = rng.uniform(-obj.scale, obj.scale, count)
        else:
            X = np.atleast_2d(samples)
        vals = H.value(X) - H.linear_value(X)
        grads = H.gradient(X) - H.linear
        hess = H.hessian(X)
        N = len(obj.slabs)
        bound = N**2 * max((max(1.0, np.linalg.norm(Q, 1) ** 2) * abs(a) for Q, _, a in obj.slabs), default=0.0)
        return {"H_minus_H0_c2": c2_norm(vals, grads, hess), "bound_expression": bound, "samples": int(X.shape[0])}
    raise DomainError(f"cannot size {type(obj).__name__}")


def random_poisson_linear(d: int, n: int, rng, delta: float = 0.3) -> np.ndarray:
    """Random element of the linear Poisson group with nonzero coupling block."""
    from .core import random_symplectic

    B = np.eye(2 * d + n)
    B[: 2 * d, : 2 * d] = random_symplectic(d, delta, rng)
    if n:
        B[: 2 * d, 2 * d :] = 0.3 * rng.standard_normal((2 * d, n))
        B[2 * d :, 2 * d :] = np.eye(n) + 0.2 * rng.standard_normal((n, n))
    return B


def random_base_map(d: int, n: int, rng) -> PoissonMap:
    """One of the built-in Poisson base maps, chosen at random."""
    kind = int(rng.integers(0, 5))
    D = 2 * d + n
    if kind == 0:
        return IdentityMap(d, n)
    if kind == 1:
        return TranslationMap(rng.uniform(-1, 1, D), d, n)
    if kind == 2:
        return LinearPoissonMap(random_poisson_linear(d, n, rng), d, n, v=rng.uniform(-0.5, 0.5, D))
    i = int(rng.integers(1, d + 1))
    kf = KFlowMap(float(rng.uniform(-0.5, 0.5)), i, d, n)
    if kind == 3:
        return kf
    lin = LinearPoissonMap(random_poisson_linear(d, n, rng), d, n)
    return ComposedMap([TranslationMap(rng.uniform(-0.3, 0.3, D), d, n), kf, lin])
