#!/usr/bin/env python3
"""Benchmark the numba and numpy builds of each hot kernel.

The numba build is what analysis code uses by default; setting
GPP_EXTREMES_NUMBA=0 swaps in the numpy twins. This script times both in
one process, at sizes matching a 31-year, 100-cell SSA run.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from gpp_extremes import accel
from gpp_extremes.kernels import variants


def make_inputs(rng):
    series = rng.normal(size=372)
    window = 120
    mat = np.lib.stride_tricks.sliding_window_view(series, window).T.copy()
    u, s, vt = np.linalg.svd(mat, full_matrices=False)
    windows = rng.normal(size=(361, 12))
    return {
        "hankel_average": (mat,),
        "rank_one_series": (np.ascontiguousarray(u), s, np.ascontiguousarray(vt)),
        "overlap_average": (windows,),
    }


def time_call(fn, args, repeat):
    fn(*args)  # warm-up / JIT compile
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    inputs = make_inputs(rng)
    kernels = variants()

    print(f"numba available: {accel.HAS_NUMBA}, enabled: {accel.NUMBA_ENABLED}")
    print(f"{'kernel':<18} {'numpy (ms)':>12} {'numba (ms)':>12} {'speedup':>9}")
    for name, builds in kernels.items():
        a = builds["numpy"](*inputs[name])
        b = builds["numba"](*inputs[name])
        if not np.allclose(a, b, rtol=1e-10, atol=1e-12):
            raise SystemExit(f"{name}: variants disagree")
        t_np = time_call(builds["numpy"], inputs[name], args.repeat) * 1e3
        t_nb = time_call(builds["numba"], inputs[name], args.repeat) * 1e3
        label = "numba" if accel.HAS_NUMBA else "python"
        print(f"{name:<18} {t_np:>12.3f} {t_nb:>12.3f} {t_np / t_nb:>8.2f}x  ({label} build)")


if __name__ == "__main__":
    main()
