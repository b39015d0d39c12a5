"""Time the hot kernels under the numba and pure-numpy backends.

Run with ``python3 benchmarks/bench_kernels.py [--repeat K]``. The backend
is switched through the ``BOSEMEASURE_BACKEND`` environment variable, which
the kernels read on every call. The first numba call (compilation or cache
load) is excluded from the timings.
"""
import argparse
import os
import time

import numpy as np

from bosemeasure import kernels
from bosemeasure._backend import ENV_FLAG, HAVE_NUMBA


def _cases():
    rng = np.random.default_rng(0)
    d, n = 7, 8
    states = kernels.enumerate_sector(d, n)
    off = kernels.rank_offsets(d, n)
    k = rng.integers(0, d, size=(200, 4))
    coeffs = rng.standard_normal(200)

    xa = np.sort(rng.standard_normal(400))
    wa = rng.random(400)
    wa /= wa.sum()
    xb = np.sort(rng.standard_normal(300))
    wb = rng.random(300)
    wb /= wb.sum()

    grid = np.array([-1.0, 0.0, 1.0])
    ref = np.cumsum([0.25, 0.5, 0.25])
    counts = rng.multinomial(1024, [0.25, 0.5, 0.25], size=2000)

    r = np.linspace(0.0, 1.0, 4097)
    v = np.full(r.size, 2.0)
    vm = np.full(r.size - 1, 2.0)

    return {
        "enumerate_sector(d=7,N=8)": lambda: kernels.enumerate_sector(d, n),
        "rank_states(3003)": lambda: kernels.rank_states(states, n, off),
        "monomial_coo(200 quartic terms)": lambda: kernels.monomial_coo(
            states, n, off, k, np.array([True, True, False, False]), coeffs),
        "w1_cdf_sorted(400x300)": lambda: kernels.w1_cdf_sorted(xa, wa, xb, wb),
        "wp_quantile_sorted(p=2)": lambda: kernels.wp_quantile_sorted(xa, wa, xb, wb, 2.0),
        "w1_counts_batch(2000 replicas)": lambda: kernels.w1_counts_batch(counts, 1024, grid, ref),
        "rk4_radial(4096 steps)": lambda: kernels.rk4_radial(r, v, vm, 0.0),
    }


def _time(fn, repeat):
    fn()
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    backends = ["numpy"] + (["numba"] if HAVE_NUMBA else [])
    cases = _cases()
    print(f"{'kernel':36s}" + "".join(f"{b:>14s}" for b in backends) + f"{'speedup':>10s}")
    previous = os.environ.get(ENV_FLAG)
    try:
        for name, fn in cases.items():
            times = []
            for b in backends:
                os.environ[ENV_FLAG] = b
                times.append(_time(fn, args.repeat))
            ratio = times[0] / times[-1] if len(times) > 1 else 1.0
            print(f"{name:36s}" + "".join(f"{t * 1e3:12.3f}ms" for t in times) + f"{ratio:9.1f}x")
    finally:
        if previous is None:
            os.environ.pop(ENV_FLAG, None)
        else:
            os.environ[ENV_FLAG] = previous


if __name__ == "__main__":
    main()
