import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from franks_poisson.core import (PoissonSpace, c0_norm, c1_norm, embed_Phi, embed_pi_k, is_poisson_linear,
                                 is_symplectic, lift_A_pi, matrix_norm, poisson_defect, random_symplectic, rotation,
                                 structure_matrix, symplectic_defect, symplectic_J)
from franks_poisson.errors import DimensionError, DomainError

angles = st.floats(-3.0, 3.0, allow_nan=False)
seeds = st.integers(0, 2**32 - 1)


def test_J_layout():
    J = symplectic_J(2)
    assert J[0, 2] == -1 and J[2, 0] == 1
    assert np.array_equal(J.T, -J)
    Jh = structure_matrix(2, 1)
    assert Jh.shape == (5, 5) and not Jh[4].any() and not Jh[:, 4].any()


def test_space_validation():
    assert PoissonSpace(2, 3).total_dim == 7
    assert PoissonSpace(2).y_index(1) == 2
    with pytest.raises(DomainError):
        PoissonSpace(0)
    with pytest.raises(DomainError):
        PoissonSpace(1, -1)
    with pytest.raises(DomainError):
        PoissonSpace(2).x_index(3)


def test_matrix_norm_is_max_column_sum():
    A = np.array([[1.0, -2.0], [3.0, 0.5]])
    assert matrix_norm(A) == 4.0


def test_is_symplectic_examples():
    assert is_symplectic(np.eye(2))
    assert is_symplectic(np.diag([2.0, 0.5]))
    assert not is_symplectic(np.diag([2.0, 2.0]))
    with pytest.raises(DimensionError):
        symplectic_defect(np.eye(3))


def test_lift_examples():
    assert np.array_equal(lift_A_pi(np.eye(2), 3), np.eye(5))
    expected = np.array([[0.0, -1, 0], [1, 0, 0], [0, 0, 1]])
    assert np.array_equal(lift_A_pi(symplectic_J(1), 1), expected)


def test_embed_pi_k_example():
    B = embed_pi_k(rotation(np.pi / 2), 1, 1, 1)
    assert np.allclose(B, [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-15)


def test_embed_pi_k_rejects():
    with pytest.raises(DomainError):
        embed_pi_k(np.diag([2.0, 2.0]), 1, 1)
    with pytest.raises(DomainError):
        embed_pi_k(np.eye(2), 2, 1)


@given(angles, angles, st.integers(1, 3), st.integers(0, 2))
def test_embed_pi_k_homomorphism(a, b, d, n):
    k = min(d, 1 + abs(int(a * 10)) % d)
    lhs = embed_pi_k(rotation(a) @ rotation(b), k, d, n)
    rhs = embed_pi_k(rotation(a), k, d, n) @ embed_pi_k(rotation(b), k, d, n)
    assert matrix_norm(lhs - rhs) <= 1e-12
    assert is_poisson_linear(lhs, d, n)


@settings(max_examples=40)
@given(seeds, st.integers(1, 3), st.integers(0, 2))
def test_embed_Phi_homomorphism_and_norm(seed, d, n):
    rng = np.random.default_rng(seed)
    M1, M2 = random_symplectic(d, 0.3, rng), random_symplectic(d, 0.1, rng)
    lhs = embed_Phi(M1 @ M2, n)
    assert matrix_norm(lhs - embed_Phi(M1, n) @ embed_Phi(M2, n)) <= 1e-12
    assert matrix_norm(embed_Phi(M1, n)) <= max(1.0, matrix_norm(M1)) + 1e-12
    assert is_poisson_linear(lhs, d + 1, n)
    # (x_1, y_1) and z are untouched
    fixed = [0, d + 1] + list(range(2 * d + 2, 2 * d + 2 + n))
    assert np.array_equal(lhs[np.ix_(fixed, fixed)], np.eye(len(fixed)))


@settings(max_examples=40)
@given(seeds, st.integers(1, 3), st.sampled_from([1e-1, 1e-2, 1e-4]))
def test_random_symplectic(seed, d, delta):
    A = random_symplectic(d, delta, np.random.default_rng(seed))
    assert is_symplectic(A, d, 1e-10)
    assert matrix_norm(A - np.eye(2 * d)) == pytest.approx(delta, rel=1e-10)


def test_poisson_linear_group():
    d, n = 1, 1
    B = np.eye(3)
    B[:2, 2] = [0.3, -0.2]  # coupling block
    B[2, 2] = 1.5
    assert poisson_defect(B, d, n) == 0.0
    assert is_poisson_linear(B, d, n)
    C = B.copy()
    C[2, 0] = 0.1  # transverse row must not see the symplectic leaf
    assert not is_poisson_linear(C, d, n)


def test_norms():
    vals = np.array([[1.0, -3.0], [-2.0, 0.5]])
    assert c0_norm(vals) == 5.0
    jac = np.zeros((2, 2, 3))
    jac[0, 0, 1] = 7.0
    jac[1, 1, 1] = -2.0
    assert c1_norm(vals, jac) == 9.0
