"""Command-line entry point ``franks-poisson``.

Exit codes: 0 when every check passes, 1 when a check or construction
fails, 2 for usage errors (bad arguments, unreadable or malformed input).
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .core import matrix_norm, structure_matrix
from .errors import DimensionError, FranksPoissonError
from .factorization import EPS0, decompose_near_identity
from .fields import field_from_descriptor
from .flowbox import build_flowbox_chart, verify_flowbox
from .flows import DEFAULT_STEP, integrate_flow, poincare_map, trajectory
from .io import coordinate_names, dump_json, load_json, read_matrix, read_point, write_csv, write_trajectory_csv
from .kernels import backend_name
from .realization import IdentityMap, map_from_descriptor, realize_continuous, realize_discrete, sample_ball
from .report import VerificationReport, _clean
from .suites import SUITES, ConfigError, check_field, run_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _emit(obj, path=None):
    text = dump_json(_clean(obj), path)
    if path is None:
        print(text)


def _load(path, what):
    try:
        return load_json(path)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {what} {path!r}: {exc}") from None


def _hamiltonian(path):
    try:
        return field_from_descriptor(_load(path, "Hamiltonian"))
    except (KeyError, TypeError) as exc:
        raise UsageError(f"malformed field descriptor {path!r}: {exc}") from None


def _point(path, dim):
    if path is None:
        return np.zeros(dim)
    _load(path, "point")
    return read_point(path, dim)


def _matrix(path):
    _load(path, "matrix")
    return read_matrix(path)


# subcommands -------------------------------------------------------------


def cmd_decompose(args):
    A, d, _ = _matrix(args.matrix)
    fac = decompose_near_identity(A[: 2 * d, : 2 * d], args.eps0, seed=args.seed)
    out = fac.to_dict()
    out["max_factor_defect"] = fac.diagnostics.get("max_factor_defect", 0.0)
    _emit(out, args.out)
    return EXIT_OK if fac.residual <= 1e-9 else EXIT_FAIL


def cmd_flow(args):
    H = _hamiltonian(args.hamiltonian)
    x0 = _point(args.x0, H.dim)
    res = integrate_flow(H, x0, args.t, args.step)
    if args.csv:
        times, states = trajectory(H, x0, args.t, args.step)
        write_trajectory_csv(args.csv, times, states, H.value(states), H.d, H.n)
    _emit({"endpoint": res.endpoint.tolist(), "time": res.time, "steps": res.steps, "drift": res.drift}, args.out)
    return EXIT_OK if res.drift <= args.drift_tol else EXIT_FAIL


def cmd_poincare(args):
    H = _hamiltonian(args.hamiltonian)
    x0 = _point(args.x0, H.dim)
    r = poincare_map(H, x0, level=args.level, step=args.step)
    _emit({"hit": r.hit.tolist(), "tau": r.tau, "jacobian": r.jacobian.tolist(),
           "section_residual": r.section_residual, "symplectic_defect": r.symplectic_defect}, args.out)
    return EXIT_OK if r.section_residual <= 1e-12 else EXIT_FAIL


def cmd_realize_map(args):
    A, d, n = _matrix(args.target)
    n = args.n if args.n is not None else n
    f = map_from_descriptor(_load(args.base, "base map")) if args.base else IdentityMap(d, n)
    p = _point(args.point, f.dim)
    g = realize_discrete(f, None, p, A[: 2 * d, : 2 * d], args.rho, eps0=args.eps0)
    rep = VerificationReport("realize-map", environment={"rho": args.rho, "seed": args.seed})
    T = g.target_jacobian
    rep.add("jacobian_relative_error", matrix_norm(g.jacobian(p) - T) / matrix_norm(g.jac_f), 1e-5)
    rng = np.random.default_rng(args.seed)
    Jh = structure_matrix(d, n)
    X = p + sample_ball(rng, args.samples, f.dim, args.rho * np.linalg.norm(np.linalg.inv(g.chart @ g.jac_f), 2))
    Jg = g.jacobians(X)
    worst = float(np.abs(Jg @ Jh @ np.transpose(Jg, (0, 2, 1)) - Jh).max())
    rep.add("poisson_defect", worst, 1e-6)
    Y = p + 5.0 * rng.standard_normal((args.samples, f.dim))
    out = ~g.support_contains(Y)
    rep.add_flag("identical_outside_support", bool(np.array_equal(g(Y)[out], f(Y)[out])))
    _write_pair(g.descriptor(), rep, args)
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_realize_flow(args):
    A, d, n = _matrix(args.target)
    n = args.n if args.n is not None else n
    ph = realize_continuous(A[: 2 * d, : 2 * d], args.rho, d, n, eps0=args.eps0)
    r = ph.poincare()
    rep = VerificationReport("realize-flow", environment={"rho": args.rho, "scale": ph.scale})
    rep.add("poincare_jacobian_error", float(np.abs(r.jacobian - A[: 2 * d, : 2 * d]).max()), 1e-5)
    rep.add("return_time_error", abs(r.tau - 1.0), 1e-10)
    rep.add("section_residual", r.section_residual, 1e-12)
    G = np.zeros((64, ph.field.dim))
    G[:, 0] = np.linspace(-0.5, 1.5, 64)
    rep.add_flag("generators_equal_on_orbit", bool(np.all(ph.generator_difference(G) == 0.0)))
    _write_pair(ph.descriptor(), rep, args)
    return EXIT_OK if rep.passed else EXIT_FAIL


def _write_pair(descriptor, rep, args):
    if args.out or args.report:
        if args.out:
            _emit(descriptor, args.out)
        if args.report:
            _emit(rep.to_dict(), args.report)
        if not (args.out and args.report):
            _emit(rep.to_dict() if args.out else descriptor)
    else:
        _emit({"descriptor": descriptor, "report": rep.to_dict()})


def cmd_flowbox(args):
    H = _hamiltonian(args.hamiltonian)
    x = _point(args.base, H.dim)
    chart = build_flowbox_chart(H, x)
    rng = np.random.default_rng(args.seed)
    rep = verify_flowbox(chart, rng, radius=args.radius, n_samples=args.samples,
                         n_jac=min(20, args.samples), n_bracket=min(20, args.samples),
                         n_translate=min(5, args.samples))
    if args.csv:
        M = x + sample_ball(np.random.default_rng(args.seed), args.samples, H.dim, args.radius)
        Y = chart.forward(M)
        names = coordinate_names(H.d, H.n)
        header = [f"m_{c}" for c in names] + [f"g_{c}" for c in names] + ["H", "H0_of_g"]
        write_csv(args.csv, header, np.column_stack([M, Y, H.value(M), -Y[:, H.d]]))
    _emit(rep.to_dict(), args.out)
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_check(args):
    H = _hamiltonian(args.hamiltonian)
    rep = check_field(H, args.seed, args.samples)
    _emit(rep.to_dict(), args.out)
    return EXIT_OK if rep.passed else EXIT_FAIL


def _parse_set(items):
    cfg = {}
    for item in items or []:
        key, sep, raw = item.partition("=")
        section, dot, name = key.partition(".")
        if not (sep and dot and section and name):
            raise UsageError(f"--set expects section.key=value, got {item!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        cfg.setdefault(section, {})[name] = value
    return cfg


def cmd_run_suite(args):
    cfg = {}
    if args.config:
        cfg = _load(args.config, "config")
        if not isinstance(cfg, dict):
            raise UsageError("config must be a JSON object of sections")
    for section, values in _parse_set(args.set).items():
        cfg.setdefault(section, {}).update(values)
    seed = args.seed if args.seed is not None else int(cfg.pop("seed", 0))
    cfg.pop("seed", None)
    try:
        rep = run_suite(args.name, seed, cfg)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    rep.environment["backend"] = backend_name()
    _emit(rep.to_dict(), args.out)
    if args.summary:
        print("\n".join(rep.summary_lines()), file=sys.stderr)
    return EXIT_OK if rep.passed else EXIT_FAIL


# parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="franks-poisson", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        if out:
            p.add_argument("--out", help="write JSON here instead of stdout")
        return p

    p = common(sub.add_parser("decompose", help="factor a near-identity symplectic matrix"))
    p.add_argument("--matrix", required=True)
    p.add_argument("--eps0", type=float, default=EPS0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_decompose)

    p = common(sub.add_parser("flow", help="integrate a Hamiltonian flow"))
    p.add_argument("--hamiltonian", required=True)
    p.add_argument("--x0")
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--step", type=float, default=DEFAULT_STEP)
    p.add_argument("--drift-tol", type=float, default=1e-8)
    p.add_argument("--csv", help="trajectory table (t, coordinates, H)")
    p.set_defaults(func=cmd_flow)

    p = common(sub.add_parser("poincare", help="Poincare map to {x_1 = level}"))
    p.add_argument("--hamiltonian", required=True)
    p.add_argument("--x0")
    p.add_argument("--level", type=float, default=1.0)
    p.add_argument("--step", type=float, default=DEFAULT_STEP)
    p.set_defaults(func=cmd_poincare)

    for name, func, helptext in (("realize-map", cmd_realize_map, "perturb a Poisson map to a target derivative"),
                                 ("realize-flow", cmd_realize_flow, "perturb H0 to a target linear Poincare map")):
        p = common(sub.add_parser(name, help=helptext))
        p.add_argument("--target", required=True)
        p.add_argument("--rho", type=float, default=0.5)
        p.add_argument("--n", type=int, default=None, help="number of Casimir coordinates")
        p.add_argument("--eps0", type=float, default=EPS0)
        p.add_argument("--report", help="write the verification report here")
        p.add_argument("--seed", type=int, default=0)
        if name == "realize-map":
            p.add_argument("--base", help="base map descriptor (identity by default)")
            p.add_argument("--point", help="point p (origin by default)")
            p.add_argument("--samples", type=int, default=200)
        p.set_defaults(func=func)

    p = common(sub.add_parser("flowbox", help="build and verify a flowbox chart"))
    p.add_argument("--hamiltonian", required=True)
    p.add_argument("--base", help="base point x (origin by default)")
    p.add_argument("--radius", type=float, default=0.1)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", help="chart sample table")
    p.set_defaults(func=cmd_flowbox)

    p = common(sub.add_parser("check", help="gradient/support/C2 battery for a field"))
    p.add_argument("--hamiltonian", required=True)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_check)

    p = common(sub.add_parser("run-suite", help="run a verification battery"))
    p.add_argument("name", choices=SUITES + ("all",))
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", help="JSON object of per-suite sections")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override one config field")
    p.add_argument("--summary", action="store_true", help="print one line per check to stderr")
    p.set_defaults(func=cmd_run_suite)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on usage errors
    try:
        return args.func(args)
    except (UsageError, DimensionError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FranksPoissonError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
