"""Timing comparison of the numba kernels against their numpy fallbacks.

Run directly:

    python3 benchmarks/bench_kernels.py

Setting TECAUSAL_NO_NUMBA=1 before launch would disable the jit path
entirely, so this script instead times the private numpy implementations
against the public (numba-dispatched) entry points in one process.
"""

import time

import numpy as np

from tecausal import _kernels


def bench(fn, *args, repeat=5):
    fn(*args)  # warm-up (includes jit compilation on the numba path)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    rng = np.random.default_rng(0)
    print(f"numba available and enabled: {_kernels.USE_NUMBA}")

    print("\nsq_frobenius_errors: (trials, n, d) -> (trials,)")
    print(f"{'shape':>22} {'numpy (ms)':>12} {'dispatch (ms)':>14} {'speedup':>8}")
    for trials, n, d in [(100, 1000, 5), (1000, 1000, 5), (200, 5000, 10)]:
        x = rng.standard_normal((trials, n, d))
        sigma = np.ones(d)
        t_np = bench(_kernels._sq_frobenius_errors_np, x, sigma)
        t_fast = bench(_kernels.sq_frobenius_errors, x, sigma)
        print(f"{str((trials, n, d)):>22} {t_np * 1e3:>12.2f} "
              f"{t_fast * 1e3:>14.2f} {t_np / t_fast:>7.1f}x")

    print("\nbin_second_moments: (k, T, n, d) -> (k, T, d, d)")
    print(f"{'shape':>22} {'numpy (ms)':>12} {'dispatch (ms)':>14} {'speedup':>8}")
    for k, t, n, d in [(3, 10, 2000, 5), (5, 20, 5000, 10), (3, 10, 20000, 15)]:
        x = rng.standard_normal((k, t, n, d))
        t_np = bench(_kernels._bin_second_moments_np, x)
        t_fast = bench(_kernels.bin_second_moments, x)
        print(f"{str((k, t, n, d)):>22} {t_np * 1e3:>12.2f} "
              f"{t_fast * 1e3:>14.2f} {t_np / t_fast:>7.1f}x")


if __name__ == "__main__":
    main()
