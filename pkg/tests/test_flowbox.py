import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from franks_poisson.core import random_symplectic, structure_matrix
from franks_poisson.errors import DegenerateBase, DomainError, NoCrossing
from franks_poisson.fields import normal_form_hamiltonian, quadratic_hamiltonian
from franks_poisson.flowbox import (FunctionHamiltonian, LeafChart, Section, bracket_HG, build_flowbox_chart,
                                    conjugate_field, poisson_dirac_margin, solve_tau, verify_flowbox,
                                    verify_poisson_chart)
from franks_poisson.realization import random_poisson_linear, sample_ball

seeds = st.integers(0, 2**32 - 1)


def spec_example():
    # H = y1 + 0.1 x2^2 y2 on R^4, coordinates (x1, x2, y1, y2)
    return FunctionHamiltonian(
        2, 0,
        lambda P: P[:, 2] + 0.1 * P[:, 1] ** 2 * P[:, 3],
        lambda P: np.column_stack([0 * P[:, 0], 0.2 * P[:, 1] * P[:, 3], 1 + 0 * P[:, 0], 0.1 * P[:, 1] ** 2]),
    )


def coupled_example():
    # x_1 speed depends on x_2, which itself drifts: H = y1 (1 + 0.3 x2^2) + 0.1 x2^2 y2
    return FunctionHamiltonian(
        2, 0,
        lambda P: P[:, 2] * (1 + 0.3 * P[:, 1] ** 2) + 0.1 * P[:, 1] ** 2 * P[:, 3],
        lambda P: np.column_stack([0 * P[:, 0], 0.6 * P[:, 1] * P[:, 2] + 0.2 * P[:, 1] * P[:, 3],
                                   1 + 0.3 * P[:, 1] ** 2, 0.1 * P[:, 1] ** 2]),
    )


def tau_oracle(H, m, level=0.0):
    """Crossing time of {x_1 = level} by adaptive integration with event location."""
    Jh = structure_matrix(H.d, H.n)

    def rhs(t, p):
        return Jh @ H.gradient(p)

    def event(t, p):
        return p[0] - level

    hits = []
    for span in ((0, 5), (0, -5)):
        sol = solve_ivp(rhs, span, m, events=event, rtol=1e-13, atol=1e-15, method="DOP853")
        hits += list(sol.t_events[0])
    return min(hits, key=abs)


def test_tau_trivial_cases():
    H0 = normal_form_hamiltonian(2, 0)
    assert solve_tau(H0, np.zeros(4)) == 0.0
    m = np.array([0.3, 0.1, -0.2, 0.05])
    assert solve_tau(H0, m) == pytest.approx(-0.3, abs=1e-14)


@pytest.mark.parametrize("make", [spec_example, coupled_example])
def test_tau_matches_dense_oracle(make):
    H = make()
    rng = np.random.default_rng(0)
    for m in 0.2 * rng.uniform(-1, 1, (5, 4)):
        assert abs(solve_tau(H, m) - tau_oracle(H, m)) <= 1e-10


def test_tau_no_crossing():
    H0 = normal_form_hamiltonian(1, 1)
    with pytest.raises(NoCrossing):
        solve_tau(H0, np.array([100.0, 0.0, 0.0]), t_max=10.0)


def test_conjugate_field_normal_form():
    H0 = normal_form_hamiltonian(2, 1)
    m = np.array([0.05, -0.02, 0.03, 0.01, 0.4])
    chart = build_flowbox_chart(H0, np.zeros(5))
    assert chart.G(m) == pytest.approx(m[0], abs=1e-15)  # G = x_1
    XG = conjugate_field(H0, Section(), m)
    assert np.abs(XG - np.eye(5)[2]).max() <= 1e-9  # J_hat e_{x_1} = e_{y_1}
    assert bracket_HG(H0, Section(), m) == pytest.approx(1.0, abs=1e-9)


def test_normal_form_chart_is_identity():
    H0 = normal_form_hamiltonian(2, 1)
    chart = build_flowbox_chart(H0, np.zeros(5))
    M = sample_ball(np.random.default_rng(1), 50, 5, 0.1)
    assert np.abs(chart.forward(M) - M).max() <= 1e-14
    assert np.abs(chart.inverse(M) - M).max() <= 1e-14


@pytest.mark.parametrize("make", [spec_example, coupled_example])
def test_bracket_near_base(make):
    H = make()
    chart = build_flowbox_chart(H, np.zeros(4))
    for m in sample_ball(np.random.default_rng(2), 20, 4, 0.1):
        assert abs(chart.bracket(m) - 1.0) <= 1e-6


def test_quadratic_flowbox_verifies():
    rng = np.random.default_rng(3)
    d, n = 2, 1
    lin = np.zeros(5)
    lin[d] = 1.0
    Q = rng.standard_normal((5, 5))
    H = quadratic_hamiltonian(lin, 0.05 * (Q + Q.T) / 2, d, n)
    chart = build_flowbox_chart(H, np.zeros(5))
    rep = verify_flowbox(chart, rng, n_samples=300, n_jac=8, n_bracket=8, n_translate=3)
    assert rep.passed, rep.summary_lines()
    assert poisson_dirac_margin(chart) > 0.1


def test_function_hamiltonian_flowbox_verifies():
    chart = build_flowbox_chart(coupled_example(), np.zeros(4))
    rep = verify_flowbox(chart, np.random.default_rng(4), n_samples=20, n_jac=2, n_bracket=2, n_translate=1)
    assert rep.passed, rep.summary_lines()


def test_energy_along_conjugate_flow():
    # with G = -tau the G-flow lowers H at unit rate
    H = spec_example()
    chart = build_flowbox_chart(H, np.zeros(4))
    m = np.array([0.02, 0.05, -0.03, 0.04])
    for t in (0.05,):
        assert abs(H.value(chart.conjugate_flow(t, m)) - (H.value(m) - t)) <= 1e-8


def test_degenerate_and_bad_sections():
    H = quadratic_hamiltonian(np.zeros(4), np.diag([0.0, 1.0, 0.0, 1.0]), 2)
    with pytest.raises(DegenerateBase):
        build_flowbox_chart(H, np.zeros(4))
    with pytest.raises(DomainError):
        build_flowbox_chart(normal_form_hamiltonian(2), np.zeros(4), section=Section(0, 0.5))


def test_verify_poisson_chart_examples():
    rng = np.random.default_rng(5)
    X = rng.uniform(-1, 1, (20, 5))
    rep = verify_poisson_chart(lambda P: P, X, d=2, n=1, jacobian=lambda s: np.eye(5))
    assert rep.passed and rep.checks[0].measured == 0.0
    B = random_poisson_linear(2, 1, rng)
    rep = verify_poisson_chart(lambda P: np.atleast_2d(P) @ B.T, X, d=2, n=1, jacobian=lambda s: B)
    assert rep.checks[0].measured <= 1e-12
    # without a Jacobian the differences still certify the linear map
    rep = verify_poisson_chart(lambda P: np.atleast_2d(P) @ B.T, X, d=2, n=1)
    assert rep.checks[0].measured <= 1e-9


def test_leaf_chart_roundtrip():
    rng = np.random.default_rng(6)
    leaf = LeafChart(3, 1, S=random_symplectic(2, 0.2, rng))
    Q = rng.uniform(-1, 1, (10, 7))
    Q[:, 0] = 0.0
    Y = leaf.forward(Q)
    assert Y.shape == (10, 5)
    assert np.abs(leaf.backward(Y) - Q[:, leaf.leaf_index]).max() <= 1e-13


@settings(max_examples=5, deadline=None)
@given(seeds)
def test_roundtrip_property(seed):
    rng = np.random.default_rng(seed)
    lin = np.zeros(4)
    lin[2] = 1.0
    Q = rng.standard_normal((4, 4))
    H = quadratic_hamiltonian(lin, 0.05 * (Q + Q.T) / 2, 2)
    chart = build_flowbox_chart(H, np.zeros(4))
    M = sample_ball(rng, 50, 4, 0.1)
    Y = chart.forward(M)
    assert np.abs(chart.inverse(Y) - M).max() <= 1e-8
    # H0 o g = H with H0 = -y_1
    assert np.abs(-Y[:, 2] - H.value(M)).max() <= 1e-8
