import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from franks_poisson.core import embed_pi_k, lift_A_pi, random_symplectic, rotation
from franks_poisson.errors import DimensionError, DivergedError, DomainError, NoReturn, OutOfTube
from franks_poisson.fields import (make_chained_hamiltonian, make_rotation_hamiltonian, make_transit_hamiltonian,
                                   normal_form_hamiltonian, quadratic_hamiltonian)
from franks_poisson.flows import (closed_form_K_flow, closed_form_K_jacobian, closed_form_transit_flow, flow_jacobian,
                                  integrate_flow, map_jacobian, poincare_map, resolved_step, trajectory)

seeds = st.integers(0, 2**32 - 1)


def rho(P):
    return 0.5 * np.sum(np.atleast_2d(P) ** 2, axis=1)


def rho_i(P, i, d):
    P = np.atleast_2d(P)
    return 0.5 * (P[:, i - 1] ** 2 + P[:, d + i - 1] ** 2)


def test_normal_form_translation():
    H0 = normal_form_hamiltonian(2, 1)
    res = integrate_flow(H0, np.zeros(5), 1.0, 1e-2)
    assert np.allclose(res.endpoint, [1, 0, 0, 0, 0], atol=1e-14)
    assert res.drift == 0.0


def test_K_plateau_is_rotation():
    alpha, d, n = 0.4, 2, 1
    K = make_rotation_hamiltonian(alpha, 1, d, n)
    p = np.array([0.1, 0.05, -0.08, 0.02, 0.1])  # rho <= 1/32
    assert rho(p)[0] <= 1 / 32
    res = integrate_flow(K, p, 1.0, 1e-3)
    expected = embed_pi_k(rotation(alpha), 1, d, n) @ p
    assert np.abs(res.endpoint - expected).max() <= 1e-12


def test_K_far_away_is_identity():
    K = make_rotation_hamiltonian(0.9, 1, 2, 0)
    p = np.array([1.5, -1.0, 0.5, 1.0])
    assert np.linalg.norm(p) >= 2
    assert np.array_equal(integrate_flow(K, p, 1.0).endpoint, p)


def test_closed_form_examples():
    p = np.array([0.1, 0.0, 0.0, 0.0, 0.3])
    assert np.array_equal(closed_form_K_flow(0.7, 1, 0.0, p, 2), p)
    q = closed_form_K_flow(np.pi / 2, 1, 1.0, p, 2)
    assert np.allclose(q, [0.0, 0.0, 0.1, 0.0, 0.3], atol=1e-16)


@given(seeds, st.floats(-2, 2), st.floats(-3, 3))
def test_closed_form_conserves(seed, alpha, t):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 4))
    i = int(rng.integers(1, d + 1))
    P = rng.uniform(-1, 1, (10, 2 * d + 1))
    Q = closed_form_K_flow(alpha, i, t, P, d)
    assert np.allclose(rho(Q), rho(P), rtol=1e-13, atol=1e-15)
    assert np.allclose(rho_i(Q, i, d), rho_i(P, i, d), rtol=1e-13, atol=1e-15)
    assert np.array_equal(Q[:, 2 * d :], P[:, 2 * d :])


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_K_jacobian_matches_differences(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 4))
    i = int(rng.integers(1, d + 1))
    alpha = float(rng.uniform(-1, 1))
    p = rng.uniform(-0.8, 0.8, 2 * d + 1)
    J = closed_form_K_jacobian(alpha, i, 1.0, p, d)[0]
    fd = map_jacobian(lambda X: closed_form_K_flow(alpha, i, 1.0, X, d), p, 1e-5, richardson=True)
    assert np.abs(J - fd).max() <= 1e-7


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_rk4_matches_closed_form(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 4))
    i = int(rng.integers(1, d + 1))
    alpha = float(rng.uniform(-1, 1))
    P = rng.uniform(-0.7, 0.7, (4, 2 * d))
    K = make_rotation_hamiltonian(alpha, i, d)
    res = integrate_flow(K, P, 1.0, 1e-3)
    assert np.abs(res.endpoint - closed_form_K_flow(alpha, i, 1.0, P, d)).max() <= 1e-8
    assert res.drift <= 1e-8


def test_transit_examples():
    d, alpha = 2, 0.3
    p = np.array([0.0, 0.05, -0.02, 0.0, 0.03, 0.01])  # (x1, x2, x3, y1, y2, y3)
    q = closed_form_transit_flow(alpha, 1, 1.0, p, d)
    expected = p.copy()
    expected[0] = 1.0
    inner = embed_pi_k(rotation(alpha), 1, d) @ p[[1, 2, 4, 5]]
    expected[[1, 2, 4, 5]] = inner
    assert np.abs(q - expected).max() <= 1e-15
    assert np.array_equal(closed_form_transit_flow(0.8, 2, 0.7, np.zeros(6), d), [0.7, 0, 0, 0, 0, 0])


def test_transit_closed_form_vs_rk4():
    T = make_transit_hamiltonian(0.3, 1, 2, 0, True)
    P = np.random.default_rng(3).uniform(-0.2, 0.2, (6, 6))
    P[:, 0] = np.linspace(-0.3, 0.3, 6)
    res = integrate_flow(T, P, 1.0, resolved_step(T))
    assert np.abs(res.endpoint - closed_form_transit_flow(0.3, 1, 1.0, P, 2)).max() <= 1e-8


def test_transit_out_of_tube():
    with pytest.raises(OutOfTube):
        closed_form_transit_flow(0.3, 1, 1.0, np.array([0.0, 0.1, 0.3, 0.0]), 1)


def test_transit_y1_bound():
    # |y_1(t)| <= r^2 |alpha| for points of V_r on the entry section
    alpha, r = 0.3, 0.2
    rng = np.random.default_rng(4)
    q = rng.standard_normal((50, 2))
    q *= r * rng.uniform(0, 1, (50, 1)) / np.linalg.norm(q, axis=1, keepdims=True)
    P = np.zeros((50, 4))
    P[:, 1], P[:, 3] = q[:, 0], q[:, 1]
    for t in np.linspace(0, 1, 11):
        assert np.abs(closed_form_transit_flow(alpha, 1, t, P, 1)[:, 2]).max() <= r**2 * alpha


def test_flow_jacobian_examples():
    H0 = normal_form_hamiltonian(2, 1)
    assert np.abs(flow_jacobian(H0, np.zeros(5), 1.0) - np.eye(5)).max() <= 1e-10
    K = make_rotation_hamiltonian(0.3, 1, 2, 1)
    J = flow_jacobian(K, np.zeros(5), 1.0)
    assert np.abs(J - embed_pi_k(rotation(0.3), 1, 2, 1)).max() <= 1e-6


def test_poincare_normal_form():
    H0 = normal_form_hamiltonian(3, 0)
    x0 = np.array([0.0, 0.1, -0.2, 0.0, 0.3, 0.05])
    res = poincare_map(H0, x0)
    expected = x0.copy()
    expected[0] = 1.0
    assert np.abs(res.hit - expected).max() <= 1e-12
    assert res.tau == pytest.approx(1.0, abs=1e-12)
    assert np.abs(res.jacobian - np.eye(4)).max() <= 1e-8
    assert res.section_residual <= 1e-12


@pytest.mark.parametrize("alpha", [0.05, 0.3])
def test_poincare_single_transit(alpha):
    T = make_transit_hamiltonian(alpha, 1, 2, 0, True)
    res = poincare_map(T, np.zeros(6), step=resolved_step(T))
    assert np.abs(res.jacobian - embed_pi_k(rotation(alpha), 1, 2)).max() <= 1e-5
    assert abs(res.tau - 1) <= 1e-10
    assert res.section_residual <= 1e-12
    assert res.symplectic_defect <= 1e-5


def test_poincare_chained_product():
    rng = np.random.default_rng(8)
    Ps = [random_symplectic(1, 0.1, rng) for _ in range(3)]
    alphas = [0.1, -0.2, 0.15]
    H = make_chained_hamiltonian([(P, 1, a) for P, a in zip(Ps, alphas)], 1, 0)
    res = poincare_map(H, np.zeros(4), step=resolved_step(H))
    target = np.eye(2)
    for P, a in zip(Ps, alphas):
        # the pullback by Phi(P) conjugates the rotation by P^-1; product A_N ... A_1
        target = np.linalg.inv(P) @ rotation(a) @ P @ target
    assert np.abs(res.jacobian - target).max() <= 1e-5


def test_poincare_no_return():
    H0 = normal_form_hamiltonian(1, 0)
    with pytest.raises(NoReturn):
        poincare_map(H0, np.zeros(2), level=-1.0)


def test_errors():
    H0 = normal_form_hamiltonian(1, 0)
    with pytest.raises(DomainError):
        integrate_flow(H0, np.zeros(2), 1.0, step=0.0)
    with pytest.raises(DimensionError):
        integrate_flow(H0, np.zeros(3), 1.0)
    # x' = 0, y' = x ... a linear field with a hugely unstable step
    Q = quadratic_hamiltonian(np.zeros(2), np.array([[1.0, 0.0], [0.0, -1.0]]), 1)
    with pytest.raises(DivergedError):
        integrate_flow(Q, np.ones(2), 1e6, step=1e3)


def test_trajectory_shape():
    H0 = normal_form_hamiltonian(1, 1)
    times, states = trajectory(H0, np.zeros(3), 1.0, 0.25)
    assert np.allclose(times, [0, 0.25, 0.5, 0.75, 1.0])
    assert states.shape == (5, 3)
    assert np.allclose(states[:, 0], times)


@settings(max_examples=10, deadline=None)
@given(seeds)
def test_energy_drift(seed):
    rng = np.random.default_rng(seed)
    Ps = [random_symplectic(2, 0.1, rng) for _ in range(4)]
    H = make_chained_hamiltonian([(P, k % 2 + 1, 0.2) for k, P in enumerate(Ps)], 2, 1)
    X = 0.1 * rng.uniform(-1, 1, (5, H.dim))
    X[:, 0] = 0.0
    res = integrate_flow(H, X, 1.0, resolved_step(H))
    assert res.drift <= 1e-8


def test_lift_pi_consistency():
    A = random_symplectic(2, 0.1, np.random.default_rng(0))
    assert np.array_equal(lift_A_pi(A, 0), A)
