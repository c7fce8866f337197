"""Compiled vs numpy kernels on the hot paths.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each row times one kernel call on both backends (median of ``--repeat``
runs) and records the largest difference between their outputs.
"""
from __future__ import annotations

import argparse
import json
import statistics
import time

import numpy as np

from franks_poisson.core import random_symplectic
from franks_poisson.fields import make_chained_hamiltonian, make_rotation_hamiltonian, make_transit_hamiltonian
from franks_poisson.kernels import available_backends, get_backend


def _cases(rng):
    Ps = [random_symplectic(2, 0.1, rng) for _ in range(8)]
    chained = make_chained_hamiltonian([(P, k % 2 + 1, 0.1) for k, P in enumerate(Ps)], 2, 1)
    K = make_rotation_hamiltonian(0.5, 1, 3, 1)
    transit = make_transit_hamiltonian(0.3, 1, 2, 1, True)
    P_big = rng.uniform(-1, 1, (20000, chained.dim))
    P_big[:, 0] = rng.uniform(0, 1, len(P_big))
    X0 = 0.1 * rng.uniform(-1, 1, (9, transit.dim))
    X0[:, 0] = 0.0
    XK = 0.5 * rng.uniform(-1, 1, (9, K.dim))
    return [
        ("field_gradient chained N=8, 2e4 pts", lambda b: b.field_gradient(chained.params, P_big)),
        ("vector_field chained N=8, 2e4 pts", lambda b: b.vector_field(chained.params, chained.d, P_big)),
        ("rk4_integrate K, 9 rows x 1000 steps", lambda b: b.rk4_integrate(K.params, K.d, XK, 1e-3, 1000, True)[0]),
        ("rk4_integrate transit, 9 rows x 1000 steps",
         lambda b: b.rk4_integrate(transit.params, transit.d, X0, 1e-3, 1000, True)[0]),
        ("rk4_section transit, 9 rows",
         lambda b: b.rk4_section(transit.params, transit.d, X0, 0, 1.0, 1e-3, 10.0, 1e-15, 60)[0]),
    ]


def _time(fn, backend, repeat):
    out = fn(backend)  # warm-up, also the output used for the agreement column
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(backend)
        times.append(time.perf_counter() - t0)
    return statistics.median(times), np.asarray(out)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", help="also write the rows as JSON")
    args = ap.parse_args(argv)

    if "cython" not in available_backends():
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation` first")
    py, cy = get_backend("python"), get_backend("cython")
    rows = []
    print(f"{'kernel':<46}{'python [ms]':>12}{'cython [ms]':>12}{'speedup':>9}{'max diff':>11}")
    for name, fn in _cases(np.random.default_rng(args.seed)):
        tp, op = _time(fn, py, args.repeat)
        tc, oc = _time(fn, cy, args.repeat)
        diff = float(np.abs(op - oc).max())
        rows.append({"kernel": name, "python_s": tp, "cython_s": tc, "speedup": tp / tc, "max_diff": diff})
        print(f"{name:<46}{1e3 * tp:>12.2f}{1e3 * tc:>12.2f}{tp / tc:>9.1f}{diff:>11.1e}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
