"""Factor near-identity symplectic matrices into conjugated planar rotations.

A = L1 * B with L1 diagonal symplectic, B = S L2 S^-1 symplectically
diagonalized, and every planar diagonal block diag(eta, 1/eta) written as
R_theta * (P R_{-xi} P^-1).  That gives at most 4d factors
C_m * pi_k(R_{angle_m}) * C_m^-1 whose ordered product is A.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .core import (
    check_symplectic,
    matrix_norm,
    symplectic_J,
    symplectic_defect,
    symplectic_inverse,
)
from .errors import (
    ComplexSpectrum,
    DomainError,
    GapTooSmall,
    InfeasibleAngle,
    NondegeneracyFailure,
    OutOfRegime,
)

EPS0 = 0.25
MAX_RETRIES = 5
ETA_INERT = 1e-14
COMPLEX_TOL = 1e-12


def _min_gap(values) -> float:
    v = np.sort(np.asarray(values, dtype=float))
    return float(np.diff(v).min()) if v.size > 1 else math.inf


def _real_spectrum(A):
    w, V = np.linalg.eig(A)
    scale = max(1.0, float(np.abs(w).max()))
    if np.abs(w.imag).max() > COMPLEX_TOL * scale:
        raise ComplexSpectrum(f"complex eigenvalues (max imaginary part {np.abs(w.imag).max():.3e})")
    return w.real, V.real


def _unit_oriented(v, slot):
    v = v / np.linalg.norm(v)
    return -v if v[slot] < 0 else v


def perturbed_eigenpair(A, L, i: int, guard: bool = True):
    """Eigenpair of ``A`` continuing ``(L[i,i], e_i)``; ``i`` is 1-based.

    The eigenvector has unit Euclidean norm and a positive i-th component.
    """
    A = np.asarray(A, dtype=float)
    lam = np.diag(np.asarray(L, dtype=float))
    m = lam.size
    if A.shape != (m, m):
        raise DomainError(f"A must be {m}x{m}")
    if not 1 <= i <= m:
        raise DomainError(f"index {i} out of range 1..{m}")
    w, V = np.linalg.eig(A)
    j = int(np.argmin(np.abs(w - lam[i - 1])))
    if abs(w[j].imag) > COMPLEX_TOL * max(1.0, abs(w[j])):
        raise ComplexSpectrum(f"eigenvalue near {lam[i - 1]:.6g} is complex: {w[j]}")
    gap = _min_gap(lam)
    dist = matrix_norm(A - np.diag(lam))
    if guard and not dist < gap / 4:
        raise GapTooSmall(f"||A - L|| = {dist:.3e} is not below gap/4 = {gap / 4:.3e}")
    return float(w[j].real), _unit_oriented(V[:, j].real, i - 1)


def _normalize_pair(S, J, k: int):
    """Scale columns k and d+k so their pairing is -1, splitting the factor
    evenly between them.  This commutes with diag(lam, 1/lam) and keeps the
    conjugators, and with them the factor matrices, as small as possible."""
    d = S.shape[0] // 2
    pairing = S[:, k] @ J @ S[:, d + k]
    c = 1.0 / math.sqrt(abs(pairing))
    S[:, k] *= -math.copysign(c, pairing)
    S[:, d + k] *= c


def _symplectic_gram_schmidt(S, J, sweeps: int = 2):
    """Remove the O(eps * cond) symplectic defect left by the eigensolver.

    Columns k and d+k stay paired; each pair is made omega-orthogonal to the
    previous pairs and rescaled so that ``S^T J S = J``.
    """
    S = S.copy()
    d = S.shape[0] // 2
    for _ in range(sweeps):
        for k in range(d):
            for col in (k, d + k):
                u = S[:, col]
                for j in range(k):
                    e, f = S[:, j], S[:, d + j]
                    u = u + (u @ J @ f) * e - (u @ J @ e) * f
                S[:, col] = u
            _normalize_pair(S, J, k)
    return S


@dataclass
class Diagonalization:
    eigenvalues: np.ndarray  # lambda~_1..lambda~_d
    S: np.ndarray
    guard_binding: bool
    residual: float


def symplectic_diagonalize(A, L, guard: bool = True) -> Diagonalization:
    """Write ``A = S diag(lam, 1/lam) S^-1`` with ``S`` symplectic.

    ``L`` is a diagonal symplectic matrix with distinct eigenvalues that
    ``A`` is close to; eigenvalues of ``A`` are matched to the diagonal of
    ``L`` in sorted order.  With ``guard=False`` the ``||A-L|| < gap/4``
    condition is only reported, and the structural checks (real, distinct,
    reciprocal pairs, nondegenerate pairing) decide.
    """
    A = np.asarray(A, dtype=float)
    lam_L = np.diag(np.asarray(L, dtype=float))
    m = lam_L.size
    if m % 2 or A.shape != (m, m):
        raise DomainError(f"expected even-sized square inputs, got {A.shape} and {m}")
    d = m // 2
    gap = _min_gap(lam_L)
    binding = not matrix_norm(A - np.diag(lam_L)) < gap / 4
    if guard and binding:
        raise GapTooSmall(f"||A - L|| = {matrix_norm(A - np.diag(lam_L)):.3e} >= gap/4 = {gap / 4:.3e}")

    w, V = _real_spectrum(A)
    if _min_gap(w) <= 1e-9 * max(1.0, np.abs(w).max()):
        raise GapTooSmall("clustered eigenvalues")
    order_w = np.argsort(w)
    order_L = np.argsort(lam_L)
    slot_of = np.empty(m, dtype=int)
    slot_of[order_L] = order_w  # eigen index assigned to each slot of L
    mu = w[slot_of]
    if np.abs(mu[:d] * mu[d:] - 1.0).max() > 1e-8:
        raise GapTooSmall("eigenvalues do not pair reciprocally along the slots of L")

    J = symplectic_J(d)
    cols = [_unit_oriented(V[:, slot_of[s]], s) for s in range(m)]
    S = np.column_stack(cols)
    for k in range(d):
        pairing = S[:, k] @ J @ S[:, d + k]
        if abs(pairing) < 1e-6:
            raise NondegeneracyFailure(f"symplectic pairing of plane {k + 1} is {pairing:.3e}")
        _normalize_pair(S, J, k)  # (S^T J S)[k, d+k] = J[k, d+k] = -1
    S = _symplectic_gram_schmidt(S, J)
    lam = mu[:d].copy()
    D = np.concatenate([lam, 1.0 / lam])
    residual = matrix_norm(S @ np.diag(D) @ np.linalg.inv(S) - A)
    return Diagonalization(lam, S, binding, residual)


def planar_factor(eta: float):
    """Return ``(theta, xi, P)`` with ``R_{-theta} diag(eta, 1/eta) = P R_{-xi} P^-1``.

    ``theta`` takes the extreme value ``1 - cos(theta) = |eta - 1|`` when that
    keeps theta in [0, pi/2], otherwise the midpoint of the admissible
    interval ``((eta-1)^2/(eta^2+1), min(|eta-1|, 1)]``.  ``P`` has det 1.
    """
    eta = float(eta)
    if not eta > 0:
        raise DomainError(f"eta must be positive, got {eta}")
    dev = abs(eta - 1.0)
    if dev <= ETA_INERT:
        return 0.0, 0.0, np.eye(2)
    lower = (eta - 1.0) ** 2 / (eta**2 + 1.0)
    u = dev
    if not (lower < u <= 1.0):
        u = 0.5 * (lower + min(dev, 1.0))
    theta = 2.0 * math.asin(math.sqrt(u / 2.0))
    cos_t = 1.0 - u
    ch = 0.5 * (eta + 1.0 / eta)
    if not abs(cos_t) < 1.0 / ch:
        raise InfeasibleAngle(f"|cos theta| = {abs(cos_t):.6g} >= 2/(eta+1/eta) = {1 / ch:.6g}")
    # 1 - cos(xi) = 1 - ch cos(theta) computed without cancellation
    one_minus_cos_xi = u - (ch - 1.0) * cos_t
    xi = 2.0 * math.asin(math.sqrt(one_minus_cos_xi / 2.0))
    s_t, s_x = math.sin(theta), math.sin(xi)
    norm = math.sqrt(s_t * s_x / eta)
    lower_left = cos_t * (1.0 / eta - eta) / 2.0  # cos(xi) - eta cos(theta)
    P = np.array([[s_t / eta, 0.0], [lower_left, s_x]]) / norm
    return theta, xi, P


@dataclass
class RotationFactor:
    """``C pi_k(R_angle) C^-1`` acting on R^{2d}; ``k`` is 1-based."""

    k: int
    angle: float
    conjugator: np.ndarray
    theta: float = 0.0
    xi: float = 0.0
    role: str = "theta"
    inert: bool = False

    @property
    def d(self) -> int:
        return self.conjugator.shape[0] // 2

    def rotation_matrix(self) -> np.ndarray:
        d, i = self.d, self.k - 1
        R = np.eye(2 * d)
        c, s = math.cos(self.angle), math.sin(self.angle)
        R[i, i] = R[d + i, d + i] = c
        R[i, d + i], R[d + i, i] = -s, s
        return R

    @cached_property
    def _inverse(self) -> np.ndarray:
        return symplectic_inverse(self.conjugator)

    def conjugator_inverse(self) -> np.ndarray:
        # exact up to the symplectic defect of C
        return self._inverse

    def matrix(self) -> np.ndarray:
        # rank-2 update: I + C[:, plane] (R - I) C^-1[plane, :]
        d, i = self.d, self.k - 1
        plane = [i, d + i]
        c, s = math.cos(self.angle), math.sin(self.angle)
        R_minus_I = np.array([[c - 1.0, -s], [s, c - 1.0]])
        left = self.conjugator[:, plane]
        right = self._inverse[plane, :]
        return np.eye(2 * d) + left @ R_minus_I @ right

    def rotation_distance(self) -> float:
        # l1 norm of R_angle - I on one plane
        return abs(1.0 - math.cos(self.angle)) + abs(math.sin(self.angle))


@dataclass
class Factorization:
    target: np.ndarray
    factors: list[RotationFactor]
    residual: float
    delta: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def active(self) -> list[RotationFactor]:
        return [f for f in self.factors if not f.inert]

    def product(self) -> np.ndarray:
        out = np.eye(self.target.shape[0])
        for mat in self.matrices():
            out = out @ mat
        return out

    def matrices(self) -> list[np.ndarray]:
        return [f.matrix() for f in self.factors]

    def to_dict(self) -> dict:
        return {
            "factors": [
                {
                    "k": f.k,
                    "angle": f.angle,
                    "xi": f.xi,
                    "theta": f.theta,
                    "role": f.role,
                    "inert": f.inert,
                    "P_rows": f.conjugator.tolist(),
                }
                for f in self.factors
            ],
            "residual": self.residual,
            "delta": self.delta,
            "c_fit": self.diagnostics.get("c_fit"),
            "c_P": self.diagnostics.get("c_P"),
        }


def _diag_factors(etas, conj, d):
    """Factors of ``conj * prod_k pi_k(diag(eta_k, 1/eta_k)) * conj^-1``."""
    out = []
    for k, eta in enumerate(etas, start=1):
        theta, xi, P = planar_factor(eta)
        inert = theta == 0.0 and xi == 0.0
        out.append(RotationFactor(k, theta, conj.copy(), theta, xi, "theta", inert))
        plane = [k - 1, d + k - 1]
        conj_P = conj.copy()
        conj_P[:, plane] = conj[:, plane] @ P  # conj @ pi_k(P)
        out.append(RotationFactor(k, -xi, conj_P, theta, xi, "xi", inert))
    return out


def _l1_spectrum(d, delta, attempt, rng):
    if attempt == 0:
        # deterministic first try: |lambda_i - 1| <= delta, gaps delta/(2d)
        return 1.0 + np.arange(1, d + 1) * delta / (2 * d)
    spread = 2.0**attempt
    steps = rng.uniform(0.5, 1.5, size=d)
    return np.exp(spread * delta * np.cumsum(steps) / d)


def _planar_rotation(A, d: int, tol: float = 1e-14):
    """``(k, angle)`` when ``A = pi_k(R_angle)`` for a single plane k, else None."""
    E = A - np.eye(2 * d)
    planes = sorted({j % d for j in np.flatnonzero(np.abs(E).max(axis=0) > 0)} |
                    {j % d for j in np.flatnonzero(np.abs(E).max(axis=1) > 0)})
    if len(planes) != 1:
        return None
    k = planes[0]
    idx = [k, d + k]
    mask = np.ones_like(E, dtype=bool)
    mask[np.ix_(idx, idx)] = False
    if np.abs(E[mask]).max(initial=0.0) > 0.0:
        return None
    M = A[np.ix_(idx, idx)]
    angle = math.atan2(M[1, 0], M[0, 0])
    c, s = math.cos(angle), math.sin(angle)
    if np.abs(M - np.array([[c, -s], [s, c]])).max() > tol:
        return None
    return k + 1, angle


def decompose_near_identity(A, eps0: float = EPS0, max_retries: int = MAX_RETRIES, seed: int = 0) -> Factorization:
    """Factor a symplectic ``A`` with ``||A - I|| < eps0`` into at most 4d rotations.

    A planar rotation ``pi_k(R_angle)`` is already a single factor and is
    returned as such, for any angle.
    """
    A = check_symplectic(A, tol=1e-9, name="target")
    m = A.shape[0]
    d = m // 2
    I = np.eye(m)
    delta = matrix_norm(A - I)
    direct = _planar_rotation(A, d) if delta > 0.0 else None
    if direct is not None:
        factor = RotationFactor(direct[0], direct[1], I.copy(), role="direct")
        fac = Factorization(A, [factor], 0.0, delta)
        fac.residual = matrix_norm(factor.matrix() - A) / max(1.0, matrix_norm(A))
        rot = factor.rotation_distance()
        fac.diagnostics = {"attempts": 0, "direct_rotation": True, "max_rotation_distance": rot,
                           "c_fit": rot / math.sqrt(delta), "c_P": 1.0,
                           "max_factor_defect": symplectic_defect(factor.matrix())}
        return fac
    if not delta < eps0:
        raise OutOfRegime(f"||A - I|| = {delta:.4g} is not below eps0 = {eps0}")
    if delta == 0.0:
        return Factorization(A, [], 0.0, 0.0, {"attempts": 0, "c_fit": 0.0, "c_P": 1.0})

    rng = np.random.default_rng(seed)
    last_error = None
    for attempt in range(max_retries + 1):
        lam1 = _l1_spectrum(d, delta, attempt, rng)
        L1 = np.concatenate([lam1, 1.0 / lam1])
        B = A / L1[:, None]
        try:
            diag = symplectic_diagonalize(B, np.diag(1.0 / L1), guard=False)
            factors = _diag_factors(lam1, I, d) + _diag_factors(diag.eigenvalues, diag.S, d)
        except (ComplexSpectrum, GapTooSmall, NondegeneracyFailure, InfeasibleAngle) as exc:
            last_error = exc
            continue
        fac = Factorization(A, factors, 0.0, delta)
        mats = fac.matrices()
        prod = I
        for mat in mats:
            prod = prod @ mat
        fac.residual = matrix_norm(prod - A) / max(1.0, matrix_norm(A))
        if fac.residual > 1e-9:
            last_error = GapTooSmall(f"reconstruction residual {fac.residual:.3e}")
            continue
        rot = max((f.rotation_distance() for f in factors), default=0.0)
        conjugators = {id(f.conjugator): f for f in factors}.values()
        cP = max(max(matrix_norm(f.conjugator), matrix_norm(f.conjugator_inverse())) for f in conjugators)
        fac.diagnostics = {
            "attempts": attempt + 1,
            "L1": lam1.tolist(),
            "L2": diag.eigenvalues.tolist(),
            "guard_binding": diag.guard_binding,
            "max_rotation_distance": rot,
            "c_fit": rot / math.sqrt(delta),
            "c_P": cP,
            "max_factor_defect": max(symplectic_defect(mat) for mat in mats),
        }
        return fac
    raise last_error
