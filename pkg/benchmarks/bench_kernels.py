#!/usr/bin/env python3
"""Benchmark the compiled kernel backend against the pure-Python twin.

Both backends implement identical algorithms with identical PRNGs, so their
outputs are bit-equal (verified here); the point of the extension is speed.

Usage: python benchmarks/bench_kernels.py [--size 24] [--repeat 3]
"""

import argparse
import time

import numpy as np

from planeflow import _core_py, core


def _time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_nnf(native, size, repeat):
    rng = np.random.default_rng(0)
    a = rng.random((size, size, 3))
    b = np.roll(a, size // 4, axis=1).copy()
    mask = np.zeros((size, size), np.uint8)
    sv = np.zeros((size, size), np.uint8)
    zeros = np.zeros((size, size), np.int32)
    args = (a, b, 3, 4, 0.5, 7, mask, sv, zeros, zeros)

    t_nat, out_nat = _time(lambda: native.nnf_search(*args), repeat)
    t_py, out_py = _time(lambda: _core_py.nnf_search(*args), 1)
    identical = all(np.array_equal(x, y) for x, y in zip(out_nat, out_py))
    return "nnf_search", f"{size}x{size}x3, 4 iters", t_nat, t_py, identical


def bench_knn(native, size, repeat):
    rng = np.random.default_rng(1)
    nodew = 1.0 + 100.0 * rng.random((size, size))
    n = size * size
    seeds = rng.choice(n, size=max(n // 10, 8), replace=False).astype(np.int64)
    t_nat, out_nat = _time(lambda: native.knn_geodesic(nodew, seeds, 8), repeat)
    t_py, out_py = _time(lambda: _core_py.knn_geodesic(nodew, seeds, 8), 1)
    identical = all(np.array_equal(x, y) for x, y in zip(out_nat, out_py))
    return "knn_geodesic", f"{size}x{size}, k=8", t_nat, t_py, identical


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--size", type=int, default=24,
                        help="problem edge length (pure Python is slow!)")
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    if core.BACKEND != "native":
        raise SystemExit("compiled backend not available; build the extension "
                         "first (pip install -e . --no-build-isolation)")
    from planeflow import _core as native

    rows = [bench_nnf(native, args.size, args.repeat),
            bench_knn(native, args.size, args.repeat)]
    print(f"{'kernel':<14}{'problem':<22}{'native':>10}{'python':>10}"
          f"{'speedup':>9}  bit-equal")
    for name, prob, t_nat, t_py, same in rows:
        print(f"{name:<14}{prob:<22}{t_nat * 1e3:>8.1f}ms{t_py * 1e3:>8.1f}ms"
              f"{t_py / t_nat:>8.0f}x  {same}")


if __name__ == "__main__":
    main()
