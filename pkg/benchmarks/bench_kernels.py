"""Compare the numba kernels with their pure Python/numpy paths.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Kernel timings run in-process (jitted function against ``.py_func`` or
the vectorised numpy fallback).  The end-to-end grid solve runs twice in
subprocesses, once with ``PUCCI_SERRIN_NO_NUMBA=1``.
"""

from __future__ import annotations

import argparse
import math
import os
import subprocess
import sys
import time

import numpy as np

from pucci_serrin import _grid_kernels, _kernels, grid
from pucci_serrin._accel import USE_NUMBA
from pucci_serrin.pucci import PucciParams


def best_of(fn, repeat):
    fn()  # warm-up (compilation)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def policy_args():
    dom = grid.build_geodesic_ball((0.0, 1.0), 0.5, 1 / 64)
    op = grid._Operator(dom, PucciParams(1.0, 1.1, 0.5), "minus", grid.SolverConfig())
    rng = np.random.default_rng(0)
    u = rng.uniform(0.0, 0.05, op.n)
    delta = np.ascontiguousarray(op.deltas(u))
    return (delta, op.t, op.lengths, op.frames, op.cvec, op.kfac, op.minv, op.gfac,
            1.0, 1.1, 0.5, -1.0, op.jx, op.jy, dom.h)


SOLVE_SNIPPET = """
import time
from pucci_serrin import grid
from pucci_serrin.pucci import PucciParams
dom = grid.build_geodesic_ball((0.0, 1.0), 0.5, 1 / 64)
grid.howard_solve(dom, PucciParams(1.0, 1.1), (1.0, 0.0))
t = time.perf_counter()
grid.howard_solve(dom, PucciParams(1.0, 1.1), (1.0, 0.0))
print(time.perf_counter() - t)
"""


def solve_time(no_numba):
    env = dict(os.environ, PUCCI_SERRIN_NO_NUMBA="1" if no_numba else "0")
    out = subprocess.run([sys.executable, "-c", SOLVE_SNIPPET], env=env, check=True,
                         capture_output=True, text=True)
    return float(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not USE_NUMBA:
        sys.exit("numba is disabled (PUCCI_SERRIN_NO_NUMBA); unset it to benchmark both paths")

    rows = []
    pa = policy_args()
    rows.append(("policy selection (3493 nodes)",
                 best_of(lambda: _grid_kernels.select_policy(*pa, use_numba=True), args.repeat),
                 best_of(lambda: _grid_kernels.select_policy(*pa, use_numba=False), args.repeat)))

    radial_args = (_kernels.HYPERBOLIC, 2, 1.0, 1.1, 0.0, 1.0, 0.0, 0.5, 0.1, 1e-6, 4096, 64)
    rows.append(("radial RK4 profile (4096 steps)",
                 best_of(lambda: _kernels.radial_integrate(*radial_args), args.repeat),
                 best_of(lambda: _kernels.radial_integrate.py_func(*radial_args), 1)))

    cone_args = (2.05, 1.0, 1.5, math.pi / 16384, math.pi)
    rows.append(("cone first zero (16384 steps)",
                 best_of(lambda: _kernels.cone_first_zero(*cone_args), args.repeat),
                 best_of(lambda: _kernels.cone_first_zero.py_func(*cone_args), 1)))

    rows.append(("howard solve, R=0.5, h=1/64", solve_time(False), solve_time(True)))

    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'numba [s]':>10}  {'numpy [s]':>10}  {'speed-up':>8}")
    for name, fast, slow in rows:
        print(f"{name:<{width}}  {fast:10.4f}  {slow:10.4f}  {slow / fast:8.1f}x")


if __name__ == "__main__":
    main()
