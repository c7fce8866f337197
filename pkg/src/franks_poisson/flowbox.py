"""Poisson flowbox charts.

Given H on (R^{2d+n}, pi_0) with X_H(x) != 0 and a transversal hyperplane
Sigma = {x_1 = c} through x, the return time tau(m) to Sigma defines
G = -tau with dG(X_H) = 1.  The chart is

    g(m) = (-tau(m), h_x(q), -H(m), h_y(q), h_z(q)),   q = phi_H^{tau(m)}(m),

so that H0 o g = H for the normal form H0 = -y_1, g_* X_H = e_{x_1} and
g_* X_G = e_{y_1}.  Moving q along e_{y_1} (which is how phi_G acts on
Sigma) does not change its leaf coordinates, so no conjugate flow is needed
in the forward map.  The inverse solves for y_1 on the line through the leaf
point and flows by H:

    g^{-1}(y) = phi_H^{y_1}(c, x_hat, y_1*, y_hat, z),  H(...) = -y_{d+1}.

With X_H = J grad H the conjugate flow lowers H: H o phi_G^t = H - t.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .core import is_symplectic, structure_matrix, symplectic_inverse
from .errors import DegenerateBase, DimensionError, DomainError, NoCrossing
from .fields import HamiltonianField
from .flows import DEFAULT_STEP, T_MAX, integrate_flow, map_jacobian
from .report import VerificationReport

TAU_TOL = 1e-12  # required |x_1 - c| at phi_H^tau(m)
TAU_FD_STEP = 1e-6  # central-difference step for grad tau, scaled by max(1, |m|)
BRACKET_FD_STEP = 1e-4  # outer step for the sampled Lie bracket
SCAN_STEP = 0.05
MAX_NEWTON = 40


@dataclass(eq=False)
class FunctionHamiltonian:
    """A Hamiltonian given by batched callables ``value(P)`` and ``gradient(P)``."""

    d: int
    n: int
    func: object
    grad: object
    name: str = "function"

    @property
    def dim(self) -> int:
        return 2 * self.d + self.n

    def _rows(self, p):
        P = np.asarray(p, dtype=float)
        single = P.ndim == 1
        P = np.atleast_2d(P)
        if P.shape[-1] != self.dim:
            raise DimensionError(f"field lives on R^{self.dim}, got points of length {P.shape[-1]}")
        return P, single

    def value(self, p):
        P, single = self._rows(p)
        v = np.asarray(self.func(P), dtype=float).reshape(len(P))
        return float(v[0]) if single else v

    __call__ = value

    def gradient(self, p):
        P, single = self._rows(p)
        g = np.asarray(self.grad(P), dtype=float).reshape(P.shape)
        return g[0] if single else g

    def vector_field(self, p):
        g = np.atleast_2d(self.gradient(p))
        X = g @ structure_matrix(self.d, self.n).T
        return X[0] if np.asarray(p).ndim == 1 else X


@dataclass(frozen=True)
class Section:
    """The affine hyperplane ``{x_slot = level}`` (0-based slot)."""

    slot: int = 0
    level: float = 0.0

    def value(self, p):
        return np.asarray(p, dtype=float)[..., self.slot] - self.level


def flow(H, t: float, p, step: float = DEFAULT_STEP):
    """``phi_H^t(p)``: exact for affine fields, RK4 otherwise."""
    if t == 0.0:
        return np.array(p, dtype=float)
    if isinstance(H, HamiltonianField) and H.n_terms == 0:
        return H.exact_flow(t, p)
    return integrate_flow(H, p, t, step, track_energy=False).endpoint


def _section_rate(H, p, section):
    return float(H.vector_field(p)[section.slot])


def _bisect_tau(H, m, section, t_max, tol, step):
    """Scan outward from t = 0 in both directions and bracket the nearest crossing."""
    r0 = float(section.value(m))
    dt = min(SCAN_STEP, t_max)
    fwd = bwd = np.asarray(m, dtype=float)
    t = 0.0
    prev_f = prev_b = r0
    while t < t_max - 1e-15:
        h = min(dt, t_max - t)
        fwd = flow(H, h, fwd, step)
        bwd = flow(H, -h, bwd, step)
        if not (np.all(np.isfinite(fwd)) and np.all(np.isfinite(bwd))):
            break
        rf, rb = float(section.value(fwd)), float(section.value(bwd))
        for sign, prev, cur in ((1.0, prev_f, rf), (-1.0, prev_b, rb)):
            if prev == 0.0:
                return sign * t
            if prev * cur <= 0.0:
                a, b = sign * t, sign * (t + h)
                fn = lambda s: float(section.value(flow(H, s, m, step)))
                root = brentq(fn, min(a, b), max(a, b), xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=200)
                if abs(fn(root)) <= tol:
                    return float(root)
        prev_f, prev_b = rf, rb
        t += h
    raise NoCrossing(f"orbit does not cross x_{section.slot + 1} = {section.level} within |t| <= {t_max}")


def solve_tau(H, m, section: Section = Section(), t_max: float = T_MAX, tol: float = TAU_TOL,
              step: float = DEFAULT_STEP) -> float:
    """Time ``tau`` with ``phi_H^tau(m)`` on ``section``.

    Newton on ``s(t) = x_slot(phi^t(m)) - c`` with ``s'(t) = X_H(phi^t(m))_slot``,
    iterated to round-off; falls back to a scan plus Brent bisection.
    """
    m = np.asarray(m, dtype=float)
    r = float(section.value(m))
    if r == 0.0:
        return 0.0
    t, best = 0.0, None
    for _ in range(MAX_NEWTON):
        p = flow(H, t, m, step)
        r = float(section.value(p))
        if not math.isfinite(r):
            break
        if best is None or abs(r) < best[1]:
            best = (t, abs(r))
        if r == 0.0:
            break
        rate = _section_rate(H, p, section)
        if rate == 0.0 or not math.isfinite(rate):
            break
        dt = r / rate
        t_new = t - dt
        if abs(t_new) > t_max:
            break
        if abs(dt) <= 2 * np.finfo(float).eps * max(1.0, abs(t)) and abs(r) <= tol:
            t = t_new
            p = flow(H, t, m, step)
            r2 = abs(float(section.value(p)))
            if r2 < best[1]:
                best = (t, r2)
            break
        t = t_new
    if best is not None and best[1] <= tol:
        return float(best[0])
    return _bisect_tau(H, m, section, t_max, tol, step)


def tau_gradient(H, m, section: Section = Section(), fd_step: float = TAU_FD_STEP, **kw) -> np.ndarray:
    """Central-difference gradient of ``tau`` at ``m``."""
    m = np.asarray(m, dtype=float)
    h = fd_step * max(1.0, float(np.linalg.norm(m)))
    g = np.empty(m.size)
    for j in range(m.size):
        e = np.zeros(m.size)
        e[j] = h
        g[j] = (solve_tau(H, m + e, section, **kw) - solve_tau(H, m - e, section, **kw)) / (2 * h)
    return g


def conjugate_field(H, section: Section, m, fd_step: float = TAU_FD_STEP, **kw) -> np.ndarray:
    """``X_G(m) = J grad G(m)`` with ``G = -tau``."""
    gG = -tau_gradient(H, m, section, fd_step, **kw)
    return structure_matrix(H.d, H.n) @ gG


def bracket_HG(H, section: Section, m, fd_step: float = TAU_FD_STEP, **kw) -> float:
    """``dG(X_H)`` at ``m``; equals 1 wherever tau is defined."""
    gG = -tau_gradient(H, m, section, fd_step, **kw)
    return float(gG @ H.vector_field(np.asarray(m, dtype=float)))


@dataclass
class LeafChart:
    """Linear Darboux chart on the leaf ``Sigma_e``.

    Leaf coordinates are ``(x_hat, y_hat, z)`` (x_1 and y_1 removed).  The
    (x_hat, y_hat) block is sent through the symplectic matrix ``S`` and the
    result is shifted by ``-center``.  For ``Sigma = {x_1 = c}`` the projection
    is Poisson on every energy level, since dx_1 vanishes on T Sigma_e.
    """

    d: int
    n: int = 0
    S: np.ndarray | None = None
    center: np.ndarray | None = None

    def __post_init__(self):
        k = 2 * (self.d - 1)
        self.S = np.eye(k) if self.S is None else np.asarray(self.S, dtype=float).reshape(k, k)
        if k and not is_symplectic(self.S):
            raise DomainError("leaf chart matrix must be symplectic")
        self.S_inv = symplectic_inverse(self.S) if k else self.S
        self.center = np.zeros(k + self.n) if self.center is None else np.asarray(self.center, dtype=float).reshape(k + self.n)

    @property
    def leaf_index(self) -> list[int]:
        d = self.d
        return list(range(1, d)) + list(range(d + 1, 2 * d)) + list(range(2 * d, 2 * d + self.n))

    def forward(self, Q):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        L = Q[:, self.leaf_index]
        k = 2 * (self.d - 1)
        L[:, :k] = L[:, :k] @ self.S.T
        return L - self.center

    def backward(self, Yhat):
        """Leaf coordinates back to (x_hat, y_hat, z) values."""
        L = np.atleast_2d(np.asarray(Yhat, dtype=float)) + self.center
        k = 2 * (self.d - 1)
        L = L.copy()
        L[:, :k] = L[:, :k] @ self.S_inv.T
        return L


def _line_solve(H, p, slot: int, target: float, guess: float, tol: float = 1e-14) -> np.ndarray:
    """Return ``p`` with ``p[slot]`` replaced so that ``H(p) = target``."""
    p = np.array(p, dtype=float)

    def resid(s):
        q = p.copy()
        q[slot] = s
        return float(H.value(q)) - target

    s = float(guess)
    for _ in range(MAX_NEWTON):
        q = p.copy()
        q[slot] = s
        r = float(H.value(q)) - target
        if abs(r) <= tol * max(1.0, abs(target)):
            p[slot] = s
            return p
        dr = float(H.gradient(q)[slot])
        if dr == 0.0 or not math.isfinite(dr):
            break
        step = r / dr
        s -= step
        if abs(step) <= 2 * np.finfo(float).eps * max(1.0, abs(s)):
            p[slot] = s
            return p
    # expanding bracket around the guess
    r0 = resid(guess)
    w = 0.1
    for _ in range(60):
        for a in (guess - w, guess + w):
            if r0 * resid(a) <= 0:
                p[slot] = brentq(resid, min(a, guess), max(a, guess), xtol=1e-16, maxiter=200)
                return p
        w *= 2
    raise DomainError(f"energy level {target} not reached along coordinate {slot + 1}")


@dataclass(eq=False)
class FlowboxChart:
    H: object
    x: np.ndarray
    e: float
    section: Section
    leaf: LeafChart
    step: float = DEFAULT_STEP
    t_max: float = T_MAX
    tau_tol: float = TAU_TOL
    meta: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.H.d

    @property
    def n(self) -> int:
        return self.H.n

    @property
    def dim(self) -> int:
        return 2 * self.d + self.n

    def _kw(self):
        return dict(t_max=self.t_max, tol=self.tau_tol, step=self.step)

    def tau(self, m) -> float:
        return solve_tau(self.H, m, self.section, **self._kw())

    def G(self, m) -> float:
        return -self.tau(m)

    def conjugate_field(self, m, fd_step: float = TAU_FD_STEP) -> np.ndarray:
        return conjugate_field(self.H, self.section, m, fd_step, **self._kw())

    def bracket(self, m, fd_step: float = TAU_FD_STEP) -> float:
        return bracket_HG(self.H, self.section, m, fd_step, **self._kw())

    def conjugate_flow(self, t: float, m, step: float = 2.5e-3, fd_step: float = TAU_FD_STEP) -> np.ndarray:
        """RK4 integration of X_G, with X_G from finite differences of tau."""
        X = np.array(m, dtype=float)
        nsteps = max(1, int(math.ceil(abs(t) / step))) if t else 0
        h = t / nsteps if nsteps else 0.0
        f = lambda p: self.conjugate_field(p, fd_step)
        for _ in range(nsteps):
            k1 = f(X)
            k2 = f(X + 0.5 * h * k1)
            k3 = f(X + 0.5 * h * k2)
            k4 = f(X + h * k3)
            X = X + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        return X

    def _forward_one(self, m):
        m = np.asarray(m, dtype=float)
        t = self.tau(m)
        q = flow(self.H, t, m, self.step)
        d = self.d
        out = np.empty(self.dim)
        out[0] = -t
        out[d] = -float(self.H.value(m))
        out[self.leaf.leaf_index] = self.leaf.forward(q)[0]
        return out

    def forward(self, M):
        M = np.asarray(M, dtype=float)
        if M.ndim == 1:
            return self._forward_one(M)
        return np.array([self._forward_one(m) for m in M])

    __call__ = forward

    def _inverse_one(self, y):
        y = np.asarray(y, dtype=float)
        d = self.d
        p = np.empty(self.dim)
        p[self.section.slot] = self.section.level
        p[self.leaf.leaf_index] = self.leaf.backward(y[self.leaf.leaf_index])[0]
        p = _line_solve(self.H, p, d, -float(y[d]), guess=float(self.x[d]))
        return flow(self.H, float(y[0]), p, self.step)

    def inverse(self, Y):
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1:
            return self._inverse_one(Y)
        return np.array([self._inverse_one(y) for y in Y])

    def jacobian(self, m, fd_step: float = TAU_FD_STEP) -> np.ndarray:
        return map_jacobian(self.forward, np.asarray(m, dtype=float), fd_step)

    def descriptor(self) -> dict:
        return {
            "type": "flowbox",
            "d": self.d,
            "n": self.n,
            "base": [float(v) for v in self.x],
            "energy": float(self.e),
            "section": {"slot": self.section.slot + 1, "level": float(self.section.level)},
            **self.meta,
        }


def build_flowbox_chart(H, x, section: Section | None = None, leaf: LeafChart | None = None,
                        step: float = DEFAULT_STEP, t_max: float = T_MAX, rel_tol: float = 1e-10) -> FlowboxChart:
    """Flowbox chart of ``H`` around ``x`` with ``Sigma = {x_1 = x[0]}`` by default."""
    x = np.asarray(x, dtype=float)
    if x.shape != (H.dim,):
        raise DimensionError(f"base point must have length {H.dim}")
    X = np.asarray(H.vector_field(x), dtype=float)
    scale = max(1.0, float(np.linalg.norm(H.gradient(x))))
    if not np.linalg.norm(X) > rel_tol * scale:
        raise DegenerateBase("X_H vanishes at the base point")
    section = Section(0, float(x[0])) if section is None else section
    if section.slot != 0:
        raise DomainError("flowbox charts use a section of the form {x_1 = c}")
    if abs(float(section.value(x))) > TAU_TOL:
        raise DomainError("the section must pass through the base point")
    if not abs(X[section.slot]) > rel_tol * max(1.0, float(np.linalg.norm(X))):
        raise DegenerateBase("X_H is tangent to the section at the base point")
    leaf = LeafChart(H.d, H.n) if leaf is None else leaf
    if leaf.d != H.d or leaf.n != H.n:
        raise DimensionError("leaf chart dimensions do not match the Hamiltonian")
    return FlowboxChart(H, x, float(H.value(x)), section, leaf, step, t_max)


# verification ---------------------------------------------------------------


def poisson_deviation(J_g, d: int, n: int = 0) -> float:
    """``max |Dg J Dg^T - J|`` entrywise."""
    Jh = structure_matrix(d, n)
    return float(np.abs(J_g @ Jh @ J_g.T - Jh).max())


def verify_poisson_chart(g, samples, tol: float = 1e-5, d: int | None = None, n: int | None = None,
                         fd_step: float = TAU_FD_STEP, name: str = "poisson-chart", jacobian=None) -> VerificationReport:
    """Max deviation of ``Dg J Dg^T`` from ``J`` over ``samples``.

    Uses ``jacobian`` if given, then ``g.jacobian`` when present, else central
    differences of ``g``.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    d = g.d if d is None else d
    n = (g.n if hasattr(g, "n") else samples.shape[1] - 2 * d) if n is None else n
    jac = jacobian if jacobian is not None else getattr(g, "jacobian", None)
    worst = 0.0
    for s in samples:
        Jg = jac(s) if jac is not None else map_jacobian(g, s, fd_step)
        worst = max(worst, poisson_deviation(Jg, d, n))
    rep = VerificationReport(name, environment={"samples": int(len(samples)), "fd_step": fd_step})
    rep.add("poisson_defect", worst, tol)
    return rep


def lie_bracket(chart: FlowboxChart, m, fd_step: float = BRACKET_FD_STEP) -> np.ndarray:
    """``[X_H, X_G](m) = DX_G X_H - DX_H X_G`` by directional differences."""
    m = np.asarray(m, dtype=float)
    XH = np.asarray(chart.H.vector_field(m), dtype=float)
    XG = chart.conjugate_field(m)
    h = fd_step * max(1.0, float(np.linalg.norm(m)))
    a = (chart.conjugate_field(m + h * XH) - chart.conjugate_field(m - h * XH)) / (2 * h)
    b = (np.asarray(chart.H.vector_field(m + h * XG)) - np.asarray(chart.H.vector_field(m - h * XG))) / (2 * h)
    return a - b


def poisson_dirac_margin(chart: FlowboxChart) -> float:
    """Smallest singular value of the pairing of (dx_1, dH) with (X_H, X_G) at x.

    Nonzero means neither field, nor any combination, is tangent to Sigma_e.
    """
    x = chart.x
    XH = np.asarray(chart.H.vector_field(x), dtype=float)
    XG = chart.conjugate_field(x)
    n = np.zeros(chart.dim)
    n[chart.section.slot] = 1.0
    dH = np.asarray(chart.H.gradient(x), dtype=float)
    W = np.array([[n @ XH, n @ XG], [dH @ XH, dH @ XG]])
    return float(np.linalg.svd(W, compute_uv=False).min())


def verify_flowbox(chart: FlowboxChart, rng: np.random.Generator, radius: float = 0.1, n_samples: int = 1000,
                   n_jac: int = 20, n_bracket: int = 20, n_translate: int = 5, t_range: float = 0.1,
                   name: str = "flowbox") -> VerificationReport:
    """The full invariant battery on random samples in the ball of ``radius`` around x."""
    from .realization import sample_ball

    D, d = chart.dim, chart.d
    rep = VerificationReport(name, environment={
        "radius": radius, "samples": n_samples, "step": chart.step, "tau_tol": chart.tau_tol,
    })
    M = chart.x + sample_ball(rng, n_samples, D, radius)
    Y = chart.forward(M)
    H0 = -Y[:, d]
    rep.add("H0_of_g_minus_H", float(np.abs(H0 - chart.H.value(M)).max()), 1e-8)
    back = chart.inverse(Y)
    rep.add("inverse_of_g_roundtrip", float(np.abs(back - M).max()), 1e-8)
    rep.add("g_of_inverse_roundtrip", float(np.abs(chart.forward(back) - Y).max()), 1e-8)
    rep.add("H_of_inverse_minus_H0", float(np.abs(chart.H.value(back) + Y[:, d]).max()), 1e-8)
    rep.add("section_residual", max(abs(float(chart.section.value(flow(chart.H, chart.tau(m), m, chart.step))))
                                    for m in M[: min(50, len(M))]), TAU_TOL)

    Mb = M[:n_bracket]
    rep.add("bracket_HG_minus_1", max(abs(chart.bracket(m) - 1.0) for m in Mb), 1e-6)
    rep.add("lie_bracket_XH_XG", max(float(np.abs(lie_bracket(chart, m)).max()) for m in Mb[: max(1, n_bracket // 4)]), 1e-5)
    rep.extend(verify_poisson_chart(chart, M[:n_jac], 1e-5), prefix="chart")
    rep.add("poisson_dirac_margin", poisson_dirac_margin(chart), 1e-8, ">=")

    worst_tr = worst_hg = 0.0
    for m in M[:n_translate]:
        t1, t2 = rng.uniform(-t_range, t_range, 2)
        mg = chart.conjugate_flow(t1, m)
        worst_hg = max(worst_hg, abs(float(chart.H.value(mg)) - float(chart.H.value(m)) + t1))
        m2 = flow(chart.H, t2, mg, chart.step)
        shift = np.zeros(D)
        shift[0], shift[d] = t2, t1
        worst_tr = max(worst_tr, float(np.abs(chart.forward(m2) - chart.forward(m) - shift).max()))
    rep.add("H_along_conjugate_flow", worst_hg, 1e-8, detail="|H(phi_G^t m) - H(m) + t|")
    rep.add("translation_identity", worst_tr, 1e-8)
    return rep
