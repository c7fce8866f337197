import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from franks_poisson.core import random_symplectic
from franks_poisson.errors import DomainError
from franks_poisson.fields import (field_from_descriptor, make_chained_hamiltonian, make_rotation_hamiltonian,
                                   make_transit_hamiltonian, normal_form_hamiltonian, rescale_support)
from franks_poisson.flows import hamiltonian_vector_field

seeds = st.integers(0, 2**32 - 1)


def fd_gradient(H, p, h=1e-5):
    E = np.eye(len(p)) * h
    return np.array([(H.value(p + e) - H.value(p - e)) / (2 * h) for e in E])


def fd_hessian(H, p, h=1e-6):
    E = np.eye(len(p)) * h
    return np.array([(H.gradient(p + e) - H.gradient(p - e)) / (2 * h) for e in E])


def sample_fields(rng):
    Ps = [random_symplectic(2, 0.1, rng) for _ in range(3)]
    return [
        make_rotation_hamiltonian(0.7, 2, 3, 1),
        make_transit_hamiltonian(0.3, 1, 2, 1, True),
        make_chained_hamiltonian([(P, k % 2 + 1, 0.2) for k, P in enumerate(Ps)], 2, 1),
        rescale_support(make_rotation_hamiltonian(0.4, 1, 2), 0.3),
    ]


def test_rotation_zero_alpha():
    K = make_rotation_hamiltonian(0.0, 1, 2, 1)
    p = np.random.default_rng(0).uniform(-1, 1, (50, 5))
    assert not K.value(p).any() and not K.gradient(p).any()


def test_rotation_plateau_value():
    K = make_rotation_hamiltonian(1.0, 1, 1, 0)
    assert K.value(np.array([0.1, 0.0])) == pytest.approx(0.005, abs=1e-15)


def test_rotation_support():
    K = make_rotation_hamiltonian(1.0, 1, 2, 1)
    rng = np.random.default_rng(1)
    P = rng.standard_normal((2000, 5))
    P *= (np.sqrt(2) + rng.uniform(0, 2, (2000, 1))) / np.linalg.norm(P, axis=1, keepdims=True)
    assert np.array_equal(K.value(P), np.zeros(2000))
    assert np.array_equal(K.gradient(P), np.zeros((2000, 5)))


def test_rotation_rejects_plane():
    with pytest.raises(DomainError):
        make_rotation_hamiltonian(0.1, 3, 2)


def test_transit_examples():
    T = make_transit_hamiltonian(0.3, 1, 1, 0)
    # layout (x_1, x_2, y_1, y_2); the transit field carries a gain of 2 so that
    # its time-1 transit rotates by alpha
    p = np.array([0.5, 0.1, 0.0, 0.0])
    assert T.value(p) == pytest.approx(2 * 0.3 * 0.005, abs=1e-15)
    assert T.value(np.array([-0.6, 0.1, 0.0, 0.0])) == 0.0
    assert T.gradient(p)[0] == 0.0


def test_chained_trivial_and_far():
    H = make_chained_hamiltonian([(np.eye(2), 1, 0.0)], 1, 0)
    H0 = normal_form_hamiltonian(2, 0)
    P = np.random.default_rng(2).uniform(-1, 1, (100, 4))
    assert np.array_equal(H.value(P), H0.value(P))
    p = np.array([2.0, 0.3, 0.4, 0.1])
    Hs = make_chained_hamiltonian([(np.eye(2), 1, 0.3)], 1, 0)
    assert Hs.value(p) == -0.4  # normal form -y_1


def test_chained_single_factor_matches_transit():
    H = make_chained_hamiltonian([(np.eye(2), 1, 0.3)], 1, 0)
    T = make_transit_hamiltonian(0.3, 1, 1, 0, True)
    P = np.random.default_rng(3).uniform(-0.5, 1.5, (200, 4))
    assert np.abs(H.value(P) - T.value(P)).max() <= 1e-15


def test_chained_rejects():
    with pytest.raises(DomainError):
        make_chained_hamiltonian([], 1, 0)
    with pytest.raises(DomainError):
        make_chained_hamiltonian([(np.diag([2.0, 2.0]), 1, 0.1)], 1, 0)


def test_rescale_examples():
    H0 = normal_form_hamiltonian(2, 1)
    R = rescale_support(H0, 0.5)
    P = np.random.default_rng(4).uniform(-1, 1, (30, 5))
    assert np.allclose(R.value(P), H0.value(P), atol=1e-15)
    K = make_rotation_hamiltonian(1.0, 1, 1)
    assert np.array_equal(rescale_support(K, 1.0).value(P[:, :2]), K.value(P[:, :2]))
    with pytest.raises(DomainError):
        rescale_support(K, 0.0)


def test_rescale_support_grid():
    K = rescale_support(make_rotation_hamiltonian(1.0, 1, 1), 0.1)
    g = np.linspace(-0.2, 0.2, 401)
    X, Y = np.meshgrid(g, g)
    P = np.column_stack([X.ravel(), Y.ravel()])
    nz = K.value(P) != 0
    assert np.linalg.norm(P[nz], axis=1).max() <= 0.1 * np.sqrt(2)


def test_vector_field_examples():
    H0 = normal_form_hamiltonian(2, 1)
    assert np.array_equal(hamiltonian_vector_field(H0, np.zeros(5)), [1, 0, 0, 0, 0])
    K = make_rotation_hamiltonian(0.5, 1, 2, 1)
    p = np.array([0.1, 0.05, -0.2, 0.03, 0.07])
    v = hamiltonian_vector_field(K, p)
    assert np.allclose(v, [0.5 * 0.2, 0, 0.5 * 0.1, 0, 0], atol=1e-15)


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_gradients_match_differences(seed):
    rng = np.random.default_rng(seed)
    for H in sample_fields(rng):
        P = rng.uniform(-1, 1, (5, H.dim))
        if H.dim > 5:
            P[:, 0] = rng.uniform(-0.1, 1.1, 5)
        G = H.gradient(P)
        for p, g in zip(P, G):
            assert np.abs(fd_gradient(H, p) - g).max() <= 1e-6 * max(1.0, np.abs(p).max())


@settings(max_examples=10, deadline=None)
@given(seeds)
def test_hessians_match_differences(seed):
    rng = np.random.default_rng(seed)
    for H in sample_fields(rng):
        P = rng.uniform(-0.8, 0.8, (3, H.dim))
        for p in P:
            assert np.abs(fd_hessian(H, p) - H.hessian(p)).max() <= 1e-5


@settings(max_examples=10, deadline=None)
@given(seeds)
def test_z_components_vanish(seed):
    rng = np.random.default_rng(seed)
    for H in sample_fields(rng):
        if H.n:
            P = rng.uniform(-1, 1, (20, H.dim))
            assert not hamiltonian_vector_field(H, P)[:, 2 * H.d :].any()


def test_descriptor_roundtrip():
    for H in sample_fields(np.random.default_rng(6)):
        H2 = field_from_descriptor(H.to_descriptor())
        P = np.random.default_rng(7).uniform(-1, 1, (40, H.dim))
        assert np.array_equal(H.value(P), H2.value(P))
