"""Compare the compiled and numpy slice kernels on full solves.

Usage: python3 benchmarks/bench_kernels.py [--repeat 3]
"""
import argparse
import time

import numpy as np

from censinv import kernels, solver
from censinv.cli import bundled_model

CASES = [
    ("two_state_censored", 200, 300),
    ("two_state_censored", 100, 150),
    ("three_state_K2a", 10, 50),
]


def timed(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def kernel_sweep(kern, spec, lat, U):
    """Every slice's continuation for a fixed surface ``U``."""
    G, A = U.shape[1:]
    out = np.empty((G, A))
    arg = np.empty((G, A), np.int64)
    for n in range(1, U.shape[0]):
        kern(U, n, *lat.kernel_args(), lat.censored, spec.h, spec.zeta,
             spec.allow_sellback, lat.dt, True, out, arg)
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if kernels.continuation_c is None:
        raise SystemExit("compiled kernel not built; run pip install -e . first")
    print(f"{'model':<20}{'k':>4}{'N':>5}{'part':>8}{'cython s':>10}{'numpy s':>10}"
          f"{'speedup':>9}{'max diff':>11}")
    for stem, k, N in CASES:
        spec = bundled_model(stem)
        lat = solver.build_lattice(spec, k, N)
        tc, Sc = timed(lambda: solver.solve_forward(spec, k, N, lattice=lat, backend="cython"),
                       args.repeat)
        tp, Sp = timed(lambda: solver.solve_forward(spec, k, N, lattice=lat, backend="numpy"),
                       args.repeat)
        rows = [("solve", tc, tp, float(np.abs(Sc.U - Sp.U).max()))]
        kc, Kc = timed(lambda: kernel_sweep(kernels.continuation_c, spec, lat, Sc.U), args.repeat)
        kp, Kp = timed(lambda: kernel_sweep(kernels.continuation_py, spec, lat, Sc.U), args.repeat)
        rows.append(("kernel", kc, kp, float(np.abs(Kc - Kp).max())))
        for part, a, b, diff in rows:
            print(f"{stem:<20}{k:4d}{N:5d}{part:>8}{a:10.3f}{b:10.3f}{b / a:9.1f}{diff:11.2e}")

if __name__ == "__main__":
    main()
