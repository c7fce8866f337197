"""Linear Poisson group, structure matrices, embeddings and norms.

Coordinates on R^{2d+n} are ordered ``(x_1..x_d, y_1..y_d, z_1..z_n)``.
Internally all indices are 0-based; every public argument that names a
plane or coordinate (``k``, ``i``) is 1-based, and error messages quote
1-based values.  The plane ``k`` occupies 0-based slots ``k-1`` and
``d+k-1``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import expm
from scipy.optimize import brentq

from .errors import DimensionError, DomainError

TOL_SYMPLECTIC = 1e-10


@lru_cache(maxsize=None)
def symplectic_J(d: int) -> np.ndarray:
    """``[[0, -I], [I, 0]]`` with d x d blocks (cached, read-only)."""
    J = np.zeros((2 * d, 2 * d))
    J[:d, d:] = -np.eye(d)
    J[d:, :d] = np.eye(d)
    J.flags.writeable = False
    return J


def symplectic_inverse(A) -> np.ndarray:
    """``-J A^T J``, the inverse of a symplectic matrix."""
    A = np.asarray(A, dtype=float)
    d = A.shape[0] // 2
    out = np.empty_like(A)
    out[:d, :d] = A[d:, d:].T
    out[:d, d:] = -A[:d, d:].T
    out[d:, :d] = -A[d:, :d].T
    out[d:, d:] = A[:d, :d].T
    return out


def structure_matrix(d: int, n: int = 0) -> np.ndarray:
    """Block matrix ``diag(J, 0_n)`` of the canonical constant-rank structure."""
    Jh = np.zeros((2 * d + n, 2 * d + n))
    Jh[: 2 * d, : 2 * d] = symplectic_J(d)
    return Jh


@dataclass(frozen=True)
class PoissonSpace:
    """R^{2d+n} with the canonical Poisson structure of rank d."""

    d: int
    n: int = 0

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise DomainError(f"rank d must be a positive integer, got {self.d}")
        if int(self.n) != self.n or self.n < 0:
            raise DomainError(f"transverse dimension n must be >= 0, got {self.n}")

    @property
    def total_dim(self) -> int:
        return 2 * self.d + self.n

    def structure_matrix(self) -> np.ndarray:
        return structure_matrix(self.d, self.n)

    def J(self) -> np.ndarray:
        return symplectic_J(self.d).copy()

    def x_index(self, i: int) -> int:
        """0-based slot of x_i (i is 1-based)."""
        self._check_plane(i)
        return i - 1

    def y_index(self, i: int) -> int:
        self._check_plane(i)
        return self.d + i - 1

    def _check_plane(self, i: int):
        if not 1 <= i <= self.d:
            raise DomainError(f"plane index {i} out of range 1..{self.d}")


def matrix_norm(A) -> float:
    """Operator norm induced by l1: maximum absolute column sum."""
    if not (isinstance(A, np.ndarray) and A.ndim == 2):
        A = np.atleast_2d(np.asarray(A, dtype=float))
    return float(np.abs(A).sum(axis=0).max(initial=0.0))


def _square(A, size=None, name="matrix"):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {A.shape}")
    if size is not None and A.shape[0] != size:
        raise DimensionError(f"{name} must be {size}x{size}, got {A.shape[0]}x{A.shape[1]}")
    return A


def symplectic_defect(A) -> float:
    A = _square(A)
    if A.shape[0] % 2:
        raise DimensionError(f"symplectic matrices have even size, got {A.shape[0]}")
    J = symplectic_J(A.shape[0] // 2)
    return matrix_norm(A.T @ J @ A - J)


def is_symplectic(A, d: int | None = None, tol: float = TOL_SYMPLECTIC) -> bool:
    A = _square(A, None if d is None else 2 * d)
    return symplectic_defect(A) <= tol


def check_symplectic(A, d: int | None = None, tol: float = TOL_SYMPLECTIC, name="matrix") -> np.ndarray:
    A = _square(A, None if d is None else 2 * d, name)
    defect = symplectic_defect(A)
    if defect > tol:
        raise DomainError(f"{name} is not symplectic (defect {defect:.3e} > {tol:.1e})")
    return A


def poisson_defect(B, d: int, n: int = 0) -> float:
    """``||B J_hat B^T - J_hat||``: the linear map pushes the structure to itself.

    This is the condition that admits the block form [[A, a], [0, b]] with an
    arbitrary coupling block a; for a = 0 it coincides with B^T J_hat B = J_hat.
    """
    B = _square(B, 2 * d + n)
    Jh = structure_matrix(d, n)
    return matrix_norm(B @ Jh @ B.T - Jh)


def is_poisson_linear(B, d: int, n: int = 0, tol: float = TOL_SYMPLECTIC) -> bool:
    """Membership in the linear Poisson group ``Pn(2d+n)``."""
    B = _square(B, 2 * d + n)
    if poisson_defect(B, d, n) > tol:
        return False
    if np.abs(B[2 * d :, : 2 * d]).max(initial=0.0) > tol:
        return False
    if n and abs(np.linalg.det(B[2 * d :, 2 * d :])) <= tol:
        return False
    return is_symplectic(B[: 2 * d, : 2 * d], d, tol)


def poisson_blocks(B, d: int, n: int = 0):
    """Split ``B`` into its symplectic block, coupling block and transverse block."""
    B = _square(B, 2 * d + n)
    return B[: 2 * d, : 2 * d].copy(), B[: 2 * d, 2 * d :].copy(), B[2 * d :, 2 * d :].copy()


def lift_A_pi(A, n: int = 0) -> np.ndarray:
    """``diag(A, I_n)``."""
    A = _square(A)
    m = A.shape[0]
    B = np.eye(m + n)
    B[:m, :m] = A
    return B


def rotation(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def embed_pi_k(M, k: int, d: int, n: int = 0, tol: float = 1e-10) -> np.ndarray:
    """Place the 2x2 matrix ``M`` on the conjugate pair (x_k, y_k)."""
    M = _square(M, 2, "planar block")
    if not 1 <= k <= d:
        raise DomainError(f"plane index {k} out of range 1..{d}")
    det = np.linalg.det(M)
    if abs(det - 1.0) > tol:
        raise DomainError(f"planar block must have det 1, got {det:.12g}")
    B = np.eye(2 * d + n)
    idx = [k - 1, d + k - 1]
    B[np.ix_(idx, idx)] = M
    return B


def phi_indices(d: int) -> list[int]:
    """0-based slots of R^{2d+2+n} that carry the 2d x 2d block under Phi."""
    return list(range(1, d + 1)) + list(range(d + 2, 2 * d + 2))


def embed_Phi(M, n: int = 0) -> np.ndarray:
    """Embed ``M`` in Sp(2d) into Pn(2d+2+n), fixing (x_1, y_1) and z.

    In 1-based terms the block sits on rows/columns ``2..d+1`` and
    ``d+3..2d+2``; slots ``1``, ``d+2`` and ``2d+3..`` carry the identity.
    """
    M = _square(M)
    if M.shape[0] % 2:
        raise DimensionError(f"Phi expects an even-sized block, got {M.shape[0]}")
    d = M.shape[0] // 2
    B = np.eye(2 * d + 2 + n)
    idx = phi_indices(d)
    B[np.ix_(idx, idx)] = M
    return B


def random_symmetric(m: int, rng: np.random.Generator) -> np.ndarray:
    S = rng.standard_normal((m, m))
    return 0.5 * (S + S.T)


def random_symplectic(d: int, delta: float, rng: np.random.Generator) -> np.ndarray:
    """Random ``A = expm(t J S)`` with ``||A - I|| == delta`` (l1 operator norm).

    Group membership comes from the exponential itself; no projection is applied.
    """
    if delta <= 0:
        return np.eye(2 * d)
    H = symplectic_J(d) @ random_symmetric(2 * d, rng)
    H /= matrix_norm(H)
    I = np.eye(2 * d)

    def excess(t):
        return matrix_norm(expm(t * H) - I) - delta

    hi = 2.0 * delta
    while excess(hi) < 0:
        hi *= 2.0
    t = brentq(excess, 0.0, hi, xtol=1e-15, rtol=1e-14)
    return expm(t * H)


def c0_norm(values) -> float:
    """Sum over components of the sup over samples.  ``values`` is (samples, components)."""
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    return float(np.abs(v).max(axis=0).sum())


def c1_norm(values, jacobians) -> float:
    """max of the C0 norm and the C0 norms of the partials.

    ``jacobians`` has shape (samples, components, variables).
    """
    jac = np.asarray(jacobians, dtype=float)
    partial = np.abs(jac).max(axis=0).sum(axis=0)  # per variable j
    return max(c0_norm(values), float(partial.max(initial=0.0)))


def c2_norm(values, gradients, hessians) -> float:
    """C2 norm of a scalar function from samples: max of the C1 norm and the
    sup of every second partial.  Shapes (S,), (S, D), (S, D, D)."""
    g = np.asarray(gradients, dtype=float)
    h = np.asarray(hessians, dtype=float)
    c1 = c1_norm(np.asarray(values, dtype=float)[:, None], g[:, None, :])
    return max(c1, float(np.abs(h).max(initial=0.0)))
