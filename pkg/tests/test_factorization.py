import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from franks_poisson.core import (embed_pi_k, is_symplectic, matrix_norm, random_symmetric, random_symplectic, rotation,
                                 symplectic_defect, symplectic_J)
from franks_poisson.errors import ComplexSpectrum, DomainError, GapTooSmall, OutOfRegime
from franks_poisson.factorization import (decompose_near_identity, perturbed_eigenpair, planar_factor,
                                          symplectic_diagonalize)
from scipy.linalg import expm

seeds = st.integers(0, 2**32 - 1)


def test_eigenpair_trivial():
    L = np.diag([1.1, 1 / 1.1])
    lam, v = perturbed_eigenpair(L, L, 1)
    assert lam == pytest.approx(1.1)
    assert np.allclose(v, [1, 0])


def test_eigenpair_perturbed_against_eigensolver():
    L = np.diag([1.1, 1 / 1.1])
    E = np.array([[0.3, -0.7], [0.2, 0.9]])
    A = L + 1e-6 * E
    lam, v = perturbed_eigenpair(A, L, 1)
    w, V = np.linalg.eig(A)
    j = np.argmin(abs(w - 1.1))
    assert abs(lam - 1.1) <= 1e-5 and abs(lam - w[j].real) <= 1e-14
    assert np.linalg.norm(v - [1, 0]) <= 1e-4
    assert np.linalg.norm(v) == pytest.approx(1.0) and v[0] > 0


def test_eigenpair_complex_and_guard():
    L = np.diag([1.1, 1 / 1.1])
    with pytest.raises(ComplexSpectrum):
        perturbed_eigenpair(rotation(0.1), L, 1)
    with pytest.raises(GapTooSmall):
        perturbed_eigenpair(L + 0.1 * np.ones((2, 2)), L, 1)


def test_diagonalize_trivial():
    L = np.diag([1.2, 1.05, 1 / 1.2, 1 / 1.05])
    res = symplectic_diagonalize(L, L)
    assert np.allclose(res.eigenvalues, [1.2, 1.05])
    assert np.allclose(res.S, np.eye(4))


@settings(max_examples=30)
@given(seeds)
def test_diagonalize_recovers_known_factors(seed):
    rng = np.random.default_rng(seed)
    L = np.diag([1.2, 1.05, 1 / 1.2, 1 / 1.05])
    S0 = random_symplectic(2, 1e-3, rng)
    A = S0 @ L @ np.linalg.inv(S0)
    res = symplectic_diagonalize(A, L)
    assert np.abs(res.eigenvalues - [1.2, 1.05]).max() <= 1e-10
    assert symplectic_defect(res.S) <= 1e-9
    D = np.diag(np.concatenate([res.eigenvalues, 1 / res.eigenvalues]))
    assert matrix_norm(res.S @ D @ np.linalg.inv(res.S) - A) <= 1e-9


def test_diagonalize_S_tends_to_identity():
    rng = np.random.default_rng(5)
    L = np.diag([1.2, 1.05, 1 / 1.2, 1 / 1.05])
    E = random_symmetric(4, rng)
    E /= matrix_norm(symplectic_J(2) @ E)
    dist = []
    for delta in (1e-2, 1e-3, 1e-4, 1e-5):
        A = L @ expm(delta * symplectic_J(2) @ E)
        res = symplectic_diagonalize(A, L)
        D = np.diag(np.concatenate([res.eigenvalues, 1 / res.eigenvalues]))
        assert matrix_norm(res.S @ D @ np.linalg.inv(res.S) - A) <= 1e-9
        dist.append(matrix_norm(res.S - np.eye(4)))
    assert all(a > b for a, b in zip(dist, dist[1:]))


def test_planar_factor_identity():
    theta, xi, P = planar_factor(1.0)
    assert theta == 0 and xi == 0 and np.array_equal(P, np.eye(2))


def test_planar_factor_example():
    eta = 1.1
    theta, xi, P = planar_factor(eta)
    assert theta == pytest.approx(math.acos(0.9), abs=1e-12)
    assert theta == pytest.approx(0.451027, abs=1e-6)
    assert math.cos(xi) == pytest.approx(0.5 * (1.1 + 1 / 1.1) * 0.9, abs=1e-12)
    assert math.cos(xi) == pytest.approx(0.904091, abs=1e-6)
    assert xi == pytest.approx(0.441549, abs=1e-6)  # arccos(0.904091)
    assert np.linalg.det(P) == pytest.approx(1.0, abs=1e-12)
    lhs = rotation(-theta) @ np.diag([eta, 1 / eta])
    assert np.abs(lhs - P @ rotation(-xi) @ np.linalg.inv(P)).max() <= 1e-10


def test_planar_factor_lower_bound():
    eta = 0.95
    theta, _, _ = planar_factor(eta)
    gap = 1 - math.cos(theta)
    assert gap == pytest.approx(0.05, abs=1e-12)
    lower = (eta - 1) ** 2 / (eta**2 + 1)
    assert lower == pytest.approx(0.0025 / 1.9025, abs=1e-15)
    assert lower < gap


def test_planar_factor_rejects():
    with pytest.raises(DomainError):
        planar_factor(-1.0)


@given(st.floats(0.5, 1.5))
def test_planar_factor_conjugacy(eta):
    theta, xi, P = planar_factor(eta)
    assert 0 <= theta <= math.pi / 2 and 0 <= xi <= math.pi / 2
    lhs = rotation(-theta) @ np.diag([eta, 1 / eta])
    assert np.abs(lhs - P @ rotation(-xi) @ np.linalg.inv(P)).max() <= 1e-9


def test_decompose_identity():
    fac = decompose_near_identity(np.eye(4))
    assert fac.residual == 0.0
    assert all(f.angle == 0 for f in fac.factors) or not fac.active


def test_decompose_expm_example():
    rng = np.random.default_rng(2)
    A = expm(0.01 * symplectic_J(2) @ random_symmetric(4, rng))
    fac = decompose_near_identity(A)
    assert fac.residual <= 1e-9
    assert len(fac.factors) <= 8
    assert matrix_norm(fac.product() - A) <= 1e-9
    delta = matrix_norm(A - np.eye(4))
    assert max(f.rotation_distance() for f in fac.factors) <= fac.diagnostics["c_fit"] * math.sqrt(delta) + 1e-15


def test_decompose_single_rotation():
    A = embed_pi_k(rotation(0.02), 1, 2)
    fac = decompose_near_identity(A)
    assert matrix_norm(fac.product() - A) <= 1e-10


def test_decompose_out_of_regime():
    with pytest.raises(OutOfRegime):
        decompose_near_identity(np.diag([1.5, 1 / 1.5]))


@pytest.mark.parametrize("angle", [0.3, -1.2])
def test_planar_rotation_is_one_factor(angle):
    A = embed_pi_k(rotation(angle), 2, 3)
    fac = decompose_near_identity(A)
    assert len(fac.factors) == 1 and fac.factors[0].k == 2
    assert fac.factors[0].angle == pytest.approx(angle, abs=1e-15)
    assert fac.residual <= 1e-15


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(1, 3), st.sampled_from([1e-1, 1e-2, 1e-3, 1e-4]))
def test_decompose_round_trip(seed, d, delta):
    A = random_symplectic(d, delta, np.random.default_rng(seed))
    fac = decompose_near_identity(A)
    assert len(fac.factors) <= 4 * d
    assert matrix_norm(fac.product() - A) <= 1e-9 * max(1.0, matrix_norm(A))
    for M in fac.matrices():
        assert is_symplectic(M, d, 1e-11)


def test_factorization_json_roundtrip():
    A = random_symplectic(2, 0.01, np.random.default_rng(0))
    out = decompose_near_identity(A).to_dict()
    assert {"factors", "residual", "delta", "c_fit"} <= set(out)
    assert {"k", "xi", "theta", "P_rows"} <= set(out["factors"][0])
