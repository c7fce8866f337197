"""Deterministic verification batteries behind ``run-suite``.

Each suite takes a seed and a config section and returns a
``VerificationReport``.  Random draws come from ``default_rng([seed, key])``
with a fixed key per suite, so reports are reproducible and independent of
which other suites ran.  No wall-clock values are recorded.
"""
from __future__ import annotations

import copy
import math

import numpy as np

from .bump import make_bump
from .core import (c2_norm, embed_pi_k, matrix_norm, random_symmetric, random_symplectic, rotation,
                   structure_matrix)
from .errors import DomainError, NoCrossing
from .factorization import decompose_near_identity
from .fields import (HamiltonianField, make_chained_hamiltonian, make_rotation_hamiltonian,
                     make_transit_hamiltonian, normal_form_hamiltonian, quadratic_hamiltonian)
from .flowbox import Section, build_flowbox_chart, solve_tau, verify_flowbox
from .flows import (DEFAULT_STEP, closed_form_K_flow, closed_form_transit_flow, integrate_flow, map_jacobian,
                    poincare_map, resolved_step, trajectory)
from .realization import (IdentityMap, h_minus_id_c1, perturbation_size, random_base_map, realize_continuous, realize_discrete,
                          sample_ball)
from .report import VerificationReport

SUITES = ("factorization", "generators", "flows", "realize-discrete", "realize-continuous", "flowbox")
_KEYS = {name: k for k, name in enumerate(SUITES, start=1)}

DEFAULT_CONFIG = {
    "factorization": {"dims": [1, 2, 3], "deltas": [1e-1, 1e-2, 1e-3, 1e-4], "trials": 1000},
    "generators": {"alphas_jacobian": [0.01, 0.1, 0.5], "alphas_scaling": [1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 3e-1, 1.0],
                   "samples": 4000, "fd_samples": 50},
    "flows": {"trials": 100, "step": DEFAULT_STEP, "order_steps": [0.04, 0.02], "transit_alphas": [0.05, 0.3],
              "transit_dims": [1, 2], "drift_trials": 20},
    "realize-discrete": {"trials": 100, "rho": 0.5, "poisson_samples": 1000, "deltas": [1e-2, 1e-3, 1e-4, 1e-5],
                         "law_trials": 5},
    "realize-continuous": {"dims": [1, 2], "trials": 50, "delta": 1e-2, "rho": 0.5, "tube_samples": 500,
                           "drift_targets": 2, "drift_samples": 20},
    "flowbox": {"d": 2, "n": 1, "eps": 0.05, "radius": 0.1, "samples": 1000, "jacobian_samples": 20,
                "bracket_samples": 20, "translation_samples": 5},
}


class ConfigError(DomainError):
    """Unknown suite, section or key in a suite configuration."""


def suite_rng(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng([int(seed), _KEYS[name]])


def merged_config(config: dict | None = None) -> dict:
    """Deep copy of the defaults with ``config`` sections laid on top."""
    out = copy.deepcopy(DEFAULT_CONFIG)
    for name, section in (config or {}).items():
        if name not in out or not isinstance(section, dict):
            raise ConfigError(f"unknown config section {name!r}")
        unknown = set(section) - set(out[name])
        if unknown:
            raise ConfigError(f"unknown keys in config section {name!r}: {sorted(unknown)}")
        out[name].update(section)
    return out


def loglog_slope(xs, ys) -> float:
    xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


# factorization ----------------------------------------------------------------


def suite_factorization(seed: int, cfg: dict) -> VerificationReport:
    rng = suite_rng(seed, "factorization")
    rep = VerificationReport("factorization", environment={"seed": seed, **cfg})
    worst_res = worst_def = 0.0
    failures = 0
    max_factors = 0
    for d in cfg["dims"]:
        peaks, cfits = [], []
        for delta in cfg["deltas"]:
            peak = 0.0
            for _ in range(cfg["trials"]):
                A = random_symplectic(d, delta, rng)
                try:
                    fac = decompose_near_identity(A)
                except Exception:  # counted; reported as a failed check
                    failures += 1
                    continue
                worst_res = max(worst_res, fac.residual)
                worst_def = max(worst_def, fac.diagnostics.get("max_factor_defect", 0.0))
                peak = max(peak, fac.diagnostics.get("max_rotation_distance", 0.0))
                max_factors = max(max_factors, len(fac.factors) - 4 * d)
            peaks.append(peak)
            cfits.append(peak / math.sqrt(delta))
        rep.add(f"sqrt_law_slope_d{d}", loglog_slope(cfg["deltas"], peaks), 0.45, ">=")
        rep.add(f"c_fit_spread_d{d}", max(cfits) / min(cfits), 10.0)
        rep.data[f"c_fit_d{d}"] = cfits
    rep.add("relative_residual", worst_res, 1e-9)
    rep.add("factor_symplectic_defect", worst_def, 1e-11)
    rep.add("failed_decompositions", failures, 0, "==")
    rep.add("factors_beyond_4d", max_factors, 0, "<=")
    return rep


# generators ----------------------------------------------------------------------


def _c2_of(H: HamiltonianField, X) -> float:
    vals = H.value(X) - H.linear_value(X)
    grads = H.gradient(X) - H.linear - (0 if H.quad is None else X @ H.quad)
    return c2_norm(vals, grads, H.hessian(X) - (0 if H.quad is None else H.quad))


def _fd_errors(H: HamiltonianField, X, h: float = 1e-6):
    # the third derivative of the bump jumps at its breakpoints, so central
    # differences of the gradient are only O(h) there
    eg = eh = 0.0
    D = H.dim
    for x in X:
        E = np.eye(D) * h
        g_fd = (H.value(x + E) - H.value(x - E)) / (2 * h)
        h_fd = (H.gradient(x + E) - H.gradient(x - E)).T / (2 * h)
        eg = max(eg, float(np.abs(g_fd - H.gradient(x)).max()))
        eh = max(eh, float(np.abs(h_fd - H.hessian(x)).max()))
    return eg, eh


def _transit_samples(rng, count, d, n):
    m = d + 1
    X = rng.uniform(-1.5, 1.5, (count, 2 * m + n))
    X[:, 0] = rng.uniform(-0.1, 1.1, count)
    X[:, m] = rng.uniform(-1.1, 1.1, count)
    return X


def suite_generators(seed: int, cfg: dict) -> VerificationReport:
    rng = suite_rng(seed, "generators")
    rep = VerificationReport("generators", environment={"seed": seed, **cfg})
    bump = make_bump()
    # Gauss-Legendre on each polynomial piece is exact for the degree involved
    nodes, weights = np.polynomial.legendre.leggauss(16)
    edges = (-2.0,) + bump.breakpoints + (2.0,)
    area = sum(0.5 * (hi - lo) * weights @ bump(0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)) for lo, hi in zip(edges[:-1], edges[1:]))
    rep.add("bump_integral_minus_1", abs(area - 1.0), 1e-12)

    # D phi^1_{K_i}(0) = pi_i(R_alpha)
    worst = 0.0
    for alpha in cfg["alphas_jacobian"]:
        for d, n in ((1, 0), (2, 1), (3, 0)):
            for i in range(1, d + 1):
                K = make_rotation_hamiltonian(alpha, i, d, n)
                J = map_jacobian(lambda X: integrate_flow(K, X, 1.0, track_energy=False).endpoint, np.zeros(K.dim))
                worst = max(worst, float(np.abs(J - embed_pi_k(rotation(alpha), i, d, n)).max()))
    rep.add("rotation_jacobian_error", worst, 1e-6)

    # derivatives against finite differences and exact vanishing off the support
    eg = eh = 0.0
    outside = 0.0
    Ps = [random_symplectic(2, 0.2, rng) for _ in range(3)]
    fields = [make_rotation_hamiltonian(0.7, 2, 2, 1), make_transit_hamiltonian(0.3, 1, 2, 1, True),
              make_chained_hamiltonian([(P, k % 2 + 1, 0.2) for k, P in enumerate(Ps)], 2, 1)]
    for H in fields:
        X = rng.uniform(-0.9, 0.9, (cfg["fd_samples"], H.dim))
        if H.kind != "K":
            X[:, 0] = rng.uniform(0, 1, len(X))
        g, h = _fd_errors(H, X)
        eg, eh = max(eg, g), max(eh, h)
        far = rng.standard_normal((200, H.dim))
        far *= (H.support_radius() + 0.5 + rng.uniform(0, 2, (200, 1))) / np.linalg.norm(far, axis=1, keepdims=True)
        outside = max(outside, float(np.abs(H.value(far) - H.linear_value(far)).max()))
    rep.add("gradient_vs_fd", eg, 1e-7)
    rep.add("hessian_vs_fd", eh, 1e-5)
    rep.add("value_outside_support", outside, 0.0, "==")

    # C2 norms linear in alpha
    alphas = cfg["alphas_scaling"]
    XK = sample_ball(rng, cfg["samples"], 5, 1.5)
    XT = _transit_samples(rng, cfg["samples"], 2, 1)
    P3 = [random_symplectic(2, 0.2, rng) for _ in range(3)]
    kn, tn, cn = [], [], []
    for a in alphas:
        kn.append(_c2_of(make_rotation_hamiltonian(a, 1, 2, 1), XK))
        tn.append(_c2_of(make_transit_hamiltonian(a, 1, 2, 1, True), XT))
        cn.append(_c2_of(make_chained_hamiltonian([(P, k % 2 + 1, a) for k, P in enumerate(P3)], 2, 1), XT))
    for label, vals in (("K", kn), ("transit", tn), ("chained", cn)):
        rep.add(f"c2_slope_{label}_minus_1", abs(loglog_slope(alphas, vals) - 1.0), 0.1)
    rep.data["c2_norms"] = {"alpha": alphas, "K": kn, "transit": tn, "chained": cn}
    return rep


# flows -------------------------------------------------------------------------


def _random_K_case(rng):
    d = int(rng.integers(1, 4))
    n = int(rng.integers(0, 2))
    i = int(rng.integers(1, d + 1))
    alpha = float(rng.uniform(-1, 1))
    p = rng.standard_normal(2 * d + n)
    p *= rng.uniform(0, 1.5) / np.linalg.norm(p)
    return d, n, i, alpha, p


def suite_flows(seed: int, cfg: dict) -> VerificationReport:
    rng = suite_rng(seed, "flows")
    rep = VerificationReport("flows", environment={"seed": seed, **cfg})
    h = cfg["step"]
    h1, h2 = cfg["order_steps"]
    err, orders = 0.0, []
    for _ in range(cfg["trials"]):
        d, n, i, alpha, p = _random_K_case(rng)
        K = make_rotation_hamiltonian(alpha, i, d, n)
        exact = closed_form_K_flow(alpha, i, 1.0, p, d)
        err = max(err, float(np.abs(integrate_flow(K, p, 1.0, h).endpoint - exact).max()))
        e1 = float(np.abs(integrate_flow(K, p, 1.0, h1).endpoint - exact).max())
        e2 = float(np.abs(integrate_flow(K, p, 1.0, h2).endpoint - exact).max())
        if e2 > 1e-13:  # both errors well above round-off
            orders.append(math.log2(e1 / e2))
    rep.add("K_flow_error", err, 1e-8)
    rep.add("convergence_order", min(orders) if orders else float("nan"), 3.7, ">=")
    rep.data["orders_measured"] = len(orders)

    # conserved quantities along RK4 trajectories
    rho_drift = H_drift = 0.0
    for _ in range(cfg["drift_trials"]):
        d, n, i, alpha, p = _random_K_case(rng)
        K = make_rotation_hamiltonian(alpha, i, d, n)
        _, S = trajectory(K, p, 1.0, h)
        rho = 0.5 * np.einsum("ti,ti->t", S, S)
        rho_planes = 0.5 * (S[:, :d] ** 2 + S[:, d : 2 * d] ** 2)
        rho_drift = max(rho_drift, float(np.abs(rho - rho[0]).max()), float(np.abs(rho_planes - rho_planes[0]).max()))
        H_drift = max(H_drift, float(np.abs(K.value(S) - K.value(p)).max()))
    Ps = [random_symplectic(2, 0.1, rng) for _ in range(3)]
    chained = make_chained_hamiltonian([(P, k % 2 + 1, 0.1) for k, P in enumerate(Ps)], 2, 0)
    for H in (make_transit_hamiltonian(0.3, 1, 2, 0, True), chained):
        X0 = 0.2 * rng.uniform(-1, 1, (cfg["drift_trials"], H.dim))
        X0[:, 0] = 0.0
        res = integrate_flow(H, X0, 2.0, resolved_step(H, h))
        H_drift = max(H_drift, res.drift)
    rep.add("rho_drift", rho_drift, 1e-8)
    rep.add("H_drift", H_drift, 1e-8)

    # transit: closed form and Poincare derivative
    oracle = 0.0
    jac = tau = resid = 0.0
    for alpha in cfg["transit_alphas"]:
        for d in cfg["transit_dims"]:
            for i in range(1, d + 1):
                H = make_transit_hamiltonian(alpha, i, d, 0, True)
                X = 0.05 * rng.uniform(-1, 1, (5, H.dim))
                X[:, 0] = 0.0
                oracle = max(oracle, float(np.abs(integrate_flow(H, X, 1.0, resolved_step(H, h)).endpoint
                                                  - closed_form_transit_flow(alpha, i, 1.0, X, d)).max()))
                r = poincare_map(H, np.zeros(H.dim), step=resolved_step(H, h))
                jac = max(jac, float(np.abs(r.jacobian - embed_pi_k(rotation(alpha), i, d)).max()))
                tau = max(tau, abs(r.tau - 1.0))
                resid = max(resid, r.section_residual)
    rep.add("transit_closed_form_error", oracle, 1e-8)
    rep.add("transit_poincare_jacobian_error", jac, 1e-5)
    rep.add("transit_return_time_error", tau, 1e-10)
    rep.add("transit_section_residual", resid, 1e-12)
    return rep


# discrete realization ----------------------------------------------------------------


def suite_realize_discrete(seed: int, cfg: dict) -> VerificationReport:
    rng = suite_rng(seed, "realize-discrete")
    rep = VerificationReport("realize-discrete", environment={"seed": seed, **cfg})
    rel = pd = fd_gap = 0.0
    bitwise = True
    rho = cfg["rho"]
    for _ in range(cfg["trials"]):
        d = int(rng.integers(1, 4))
        n = int(rng.integers(0, 3))
        D = 2 * d + n
        f = random_base_map(d, n, rng)
        p = rng.uniform(-0.3, 0.3, D)
        A = random_symplectic(d, 10 ** rng.uniform(-3, -1), rng)
        g = realize_discrete(f, None, p, A, rho)
        T = g.target_jacobian
        Jp = g.jacobian(p)
        rel = max(rel, matrix_norm(Jp - T) / matrix_norm(g.jac_f))
        fd_gap = max(fd_gap, matrix_norm(Jp - map_jacobian(g, p, 1e-5, richardson=True)) / matrix_norm(Jp))
        # samples over the preimage of the support
        pre = rho * np.linalg.norm(np.linalg.inv(g.chart @ g.jac_f), 2)
        X = p + sample_ball(rng, cfg["poisson_samples"], D, 1.2 * pre)
        Jh = structure_matrix(d, n)
        Jg = g.jacobians(X)
        pd = max(pd, float(np.abs(Jg @ Jh @ np.transpose(Jg, (0, 2, 1)) - Jh).max()))
        Y = p + rng.standard_normal((200, D)) * 3 * max(1.0, pre)
        out = ~g.support_contains(Y)
        bitwise &= bool(np.array_equal(g(Y)[out], f(Y)[out]))
    rep.add("jacobian_relative_error", rel, 1e-5)
    rep.add("poisson_defect", pd, 1e-6)
    # the analytic Jacobians above are cross-checked against differences
    rep.add("exact_jacobian_vs_fd", fd_gap, 1e-6)
    rep.add_flag("identical_outside_support", bitwise)

    # ||h - id||_C1 ~ delta^(1/2)
    deltas = cfg["deltas"]
    sizes = []
    for delta in deltas:
        worst = 0.0
        for _ in range(cfg["law_trials"]):
            d = 2
            A = random_symplectic(d, delta, rng)
            g = realize_discrete(IdentityMap(d, 0), np.eye(2 * d), np.zeros(2 * d), A, rho)
            worst = max(worst, h_minus_id_c1(g, sample_ball(rng, 400, 2 * d, rho)))
        sizes.append(worst)
    rep.add("h_minus_id_slope", loglog_slope(deltas, sizes), 0.45, ">=")
    rep.data["h_minus_id_c1"] = {"delta": deltas, "size": sizes}
    return rep


# continuous realization ----------------------------------------------------------------


def suite_realize_continuous(seed: int, cfg: dict) -> VerificationReport:
    rng = suite_rng(seed, "realize-continuous")
    rep = VerificationReport("realize-continuous", environment={"seed": seed, **cfg})
    jac = sdef = tau = drift = 0.0
    bitwise_tube = bitwise_orbit = True
    size_ratio = 0.0
    for d in cfg["dims"]:
        for trial in range(cfg["trials"]):
            A = random_symplectic(d, cfg["delta"], rng)
            ph = realize_continuous(A, cfg["rho"], d, 0)
            r = ph.poincare()
            jac = max(jac, float(np.abs(r.jacobian - A).max()))
            if trial < cfg["drift_targets"]:
                X0 = sample_ball(rng, cfg["drift_samples"], ph.field.dim, ph.scale * ph.tube_radius)
                X0[:, 0] = -0.01 * ph.scale
                drift = max(drift, integrate_flow(ph.field, X0, 1.02 * ph.scale, resolved_step(ph.field)).drift)
            sdef = max(sdef, r.symplectic_defect)
            tau = max(tau, abs(r.tau - 1.0))
            D = ph.field.dim
            X = rng.standard_normal((cfg["tube_samples"], D)) * ph.scale * ph.tube_radius
            X[:, 0] = rng.uniform(-0.5, 1.5, len(X)) * ph.scale
            out = ~ph.in_tube(X)
            bitwise_tube &= bool(np.all(ph.generator_difference(X[out]) == 0.0))
            G = np.zeros((64, D))
            G[:, 0] = np.linspace(-0.5, 1.5, 64)
            bitwise_orbit &= bool(np.all(ph.generator_difference(G) == 0.0))
        size = perturbation_size(ph, rng=rng, count=500)
        size_ratio = max(size_ratio, size["H_minus_H0_c2"] / size["bound_expression"])
    rep.add("poincare_jacobian_error", jac, 1e-5)
    rep.add("poincare_symplectic_defect", sdef, 1e-6)
    rep.add("return_time_error", tau, 1e-10)
    rep.add("H_drift_through_tube", drift, 1e-8)
    rep.add_flag("generators_equal_off_tube", bitwise_tube)
    rep.add_flag("generators_equal_on_orbit", bitwise_orbit)
    rep.data["c2_over_bound"] = size_ratio
    return rep


# flowbox --------------------------------------------------------------------------------


def flowbox_examples(cfg: dict, rng: np.random.Generator):
    d, n = cfg["d"], cfg["n"]
    D = 2 * d + n
    lin = np.zeros(D)
    lin[d] = 1.0
    Q = random_symmetric(D, rng)
    return [("y1", quadratic_hamiltonian(lin, None, d, n)),
            ("y1_plus_quadratic", quadratic_hamiltonian(lin, cfg["eps"] * Q, d, n))]


def suite_flowbox(seed: int, cfg: dict) -> VerificationReport:
    rng = suite_rng(seed, "flowbox")
    rep = VerificationReport("flowbox", environment={"seed": seed, **cfg})
    d, n = cfg["d"], cfg["n"]
    D = 2 * d + n
    for label, H in flowbox_examples(cfg, rng):
        chart = build_flowbox_chart(H, np.zeros(D))
        sub = verify_flowbox(chart, rng, radius=cfg["radius"], n_samples=cfg["samples"],
                             n_jac=cfg["jacobian_samples"], n_bracket=cfg["bracket_samples"],
                             n_translate=cfg["translation_samples"], name=label)
        rep.extend(sub)
    # normal form: the chart is the identity
    H0 = normal_form_hamiltonian(d, n)
    chart = build_flowbox_chart(H0, np.zeros(D))
    M = sample_ball(rng, 100, D, cfg["radius"])
    rep.add("normal_form_chart_is_identity", float(np.abs(chart.forward(M) - M).max()), 1e-14)
    far = np.zeros(D)
    far[0] = 1e3
    try:
        solve_tau(H0, far, Section(), t_max=10.0)
        rep.add_flag("no_crossing_detected", False)
    except NoCrossing:
        rep.add_flag("no_crossing_detected", True)
    return rep


_RUNNERS = {
    "factorization": suite_factorization,
    "generators": suite_generators,
    "flows": suite_flows,
    "realize-discrete": suite_realize_discrete,
    "realize-continuous": suite_realize_continuous,
    "flowbox": suite_flowbox,
}


def run_suite(name: str, seed: int = 0, config: dict | None = None) -> VerificationReport:
    """Run one battery, or all of them in a fixed order for ``name == "all"``."""
    cfg = merged_config(config)
    if name == "all":
        rep = VerificationReport("all", environment={"seed": seed})
        for suite in SUITES:
            rep.extend(_RUNNERS[suite](seed, cfg[suite]))
        return rep
    if name not in _RUNNERS:
        raise ConfigError(f"unknown suite {name!r}; choose from {', '.join(SUITES + ('all',))}")
    return _RUNNERS[name](seed, cfg[name])


def check_field(H: HamiltonianField, seed: int = 0, samples: int = 100) -> VerificationReport:
    """Gradient, Hessian, support and C^2 battery for a single field."""
    rng = np.random.default_rng([int(seed), 99])
    rep = VerificationReport("check", environment={"seed": seed, "samples": samples, "kind": H.kind})
    R = H.support_radius() if H.n_terms else 1.0
    X = sample_ball(rng, samples, H.dim, 1.1 * R)
    eg = 0.0
    for x in X:
        h = 1e-5 * max(1.0, float(np.linalg.norm(x)))
        E = np.eye(H.dim) * h
        g_fd = (H.value(x + E) - H.value(x - E)) / (2 * h)
        eg = max(eg, float(np.abs(g_fd - H.gradient(x)).max()))
    _, eh = _fd_errors(H, X[: min(samples, 50)])
    rep.add("gradient_vs_fd", eg, 1e-6)
    rep.add("hessian_vs_fd", eh, 1e-5)
    if H.n_terms:
        far = rng.standard_normal((samples, H.dim))
        far *= (R * (1.01 + rng.uniform(0, 1, (samples, 1)))) / np.linalg.norm(far, axis=1, keepdims=True)
        rep.add("value_outside_support", float(np.abs(H.value(far) - H.linear_value(far)).max()), 0.0, "==")
    rep.data["support_radius"] = R
    rep.data["c2_norm_of_bump_terms"] = _c2_of(H, X)
    return rep
