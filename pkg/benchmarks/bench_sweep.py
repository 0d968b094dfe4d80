#!/usr/bin/env python3
"""Benchmark the transport-sweep kernels: compiled extension vs NumPy fallback.

Times full sweeps (all ordinates) of a 2D problem at a few sizes and prints
a small table with the speedup.  Run from the repository root:

    python benchmarks/bench_sweep.py [--nx 40] [--repeats 5]
"""

import argparse
import time

import numpy as np

from snrom import DGSpace, chebyshev_legendre, rectangle_mesh, simple_problem, sweep, sweep_all


def time_sweeps(problem, rhs, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        sweep_all(problem, rhs)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--nx", type=int, default=40, help="largest mesh size per axis")
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if not sweep.have_compiled():
        print("compiled kernels unavailable; benchmarking the fallback only")

    sizes = sorted({max(4, args.nx // 4), max(8, args.nx // 2), args.nx})
    print(f"{'nx':>5} {'n_dof':>8} {'n_dirs':>7} {'compiled [ms]':>14} {'python [ms]':>12} {'speedup':>8}")
    for nx in sizes:
        mesh = rectangle_mesh(nx, nx, (-1.0, 1.0, -1.0, 1.0))
        space = DGSpace(mesh, 1)
        quad = chebyshev_legendre(8, 4)
        problem = simple_problem(
            space, quad, sigma_a=0.1, sigma_s=5.0, source=lambda x, y: np.ones_like(x)
        )
        rng = np.random.default_rng(0)
        rhs = rng.standard_normal((problem.n_dirs, problem.n_dof))

        times = {}
        for backend in ("compiled", "python"):
            if backend == "compiled" and not sweep.have_compiled():
                times[backend] = float("nan")
                continue
            previous = sweep.use_backend(backend)
            try:
                sweep_all(problem, rhs)  # warm up
                times[backend] = time_sweeps(problem, rhs, args.repeats)
            finally:
                sweep.use_backend(previous)

        speedup = times["python"] / times["compiled"] if times["compiled"] > 0 else float("nan")
        print(
            f"{nx:>5} {problem.n_dof:>8} {problem.n_dirs:>7}"
            f" {1e3 * times['compiled']:>14.2f} {1e3 * times['python']:>12.2f} {speedup:>8.1f}"
        )


if __name__ == "__main__":
    main()
