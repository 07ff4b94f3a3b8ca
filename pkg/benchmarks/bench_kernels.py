"""Compare the compiled and pure-Python nonnegative QP kernels.

    python benchmarks/bench_kernels.py [--sizes 2 5 10 20] [--reps 2000] [--seed 0]

Both kernels solve the same random instances; the script checks that the
solutions agree and prints the mean time per solve for each backend.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from basket_wing import _backend
from basket_wing.simplex_opt import KKT_TOL, _warm_support


def random_spd(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.standard_normal((n, n))
    return np.ascontiguousarray(a @ a.T / n + 0.1 * np.eye(n))


def make_instances(n: int, reps: int, seed: int):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(reps):
        B = random_spd(rng, n)
        c = np.ascontiguousarray(rng.standard_normal(n) + 0.5)
        out.append((B, c, _warm_support(B, c)))
    return out


def time_backend(fn, instances, max_iter: int) -> tuple[float, list[np.ndarray]]:
    sols = []
    start = time.perf_counter()
    for B, c, warm in instances:
        u, status, _ = fn(B, c, warm, KKT_TOL, max_iter)
        sols.append(np.asarray(u))
    return (time.perf_counter() - start) / len(instances), sols


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[2, 5, 10, 20])
    parser.add_argument("--reps", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    if "cython" not in _backend.BACKENDS:
        print("compiled kernel not built; only the Python backend is available")
    print(f"{'n':>4} {'python [us]':>12} {'cython [us]':>12} {'speedup':>8} {'max |du|':>10}")
    for n in args.sizes:
        instances = make_instances(n, args.reps, args.seed)
        max_iter = 50 * n + 50
        t_py, sol_py = time_backend(_backend.BACKENDS["python"], instances, max_iter)
        if "cython" in _backend.BACKENDS:
            t_cy, sol_cy = time_backend(_backend.BACKENDS["cython"], instances, max_iter)
            diff = max(float(np.max(np.abs(a - b))) for a, b in zip(sol_py, sol_cy))
            print(f"{n:>4} {1e6 * t_py:>12.2f} {1e6 * t_cy:>12.2f} {t_py / t_cy:>8.1f} {diff:>10.2e}")
        else:
            print(f"{n:>4} {1e6 * t_py:>12.2f} {'-':>12} {'-':>8} {'-':>10}")


if __name__ == "__main__":
    main()
