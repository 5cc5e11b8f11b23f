"""Compare the compiled and numpy kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--n 11] [--repeat 3]

Reports wall time and peak traced memory of the Gram fill for both backends,
plus the coefficient kernel. The numpy fill works in row blocks; a naive
broadcast over the full ``N x N`` grid would need several ``N^2`` temporaries
(about 3 GB at ``n = 13``).
"""
import argparse
import time
import tracemalloc

import numpy as np

from mbm_holder import _kernels


def _inputs(n):
    N = 2**n
    t = np.arange(1, N + 1) / N
    h = 0.1 + 0.8 * t
    return t, h, np.ones(N)


def time_fill(mod, n, repeat):
    t, h, th = _inputs(n)
    out = np.empty((t.size, t.size))
    best = np.inf
    tracemalloc.start()
    for _ in range(repeat):
        t0 = time.perf_counter()
        mod.fill_gram_lower(t, h, th, out, 0.0)
        best = min(best, time.perf_counter() - t0)
    peak = tracemalloc.get_traced_memory()[1]
    tracemalloc.stop()
    return best, peak


def time_coefficients(mod, n, j, repeat):
    rng = np.random.default_rng(0)
    dy = rng.standard_normal(2**n)
    w = rng.standard_normal(2 ** (n - j) - 1)
    best = np.inf
    for _ in range(repeat * 20):
        t0 = time.perf_counter()
        mod.block_coefficients(dy, w, 2**j, 1.0)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=11)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = [("python", _kernels.python)]
    if _kernels.compiled is not None:
        backends.append(("compiled", _kernels.compiled))
    else:
        print("compiled extension not available; timing numpy only")
    print(f"Gram fill, N = 2^{args.n} = {2**args.n}")
    for name, mod in backends:
        dt, peak = time_fill(mod, args.n, args.repeat)
        print(f"  {name:9s} {dt:8.3f} s   peak extra memory {peak / 2**20:8.1f} MiB")
    print(f"coefficients, n = {args.n}, j = {args.n - 6}")
    for name, mod in backends:
        dt = time_coefficients(mod, args.n, args.n - 6, args.repeat)
        print(f"  {name:9s} {dt * 1e6:8.1f} us")


if __name__ == "__main__":
    main()
