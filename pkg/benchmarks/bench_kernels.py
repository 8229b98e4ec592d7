"""Time the numba and numpy kernel paths on identical fading draws.

    python3 benchmarks/bench_kernels.py [--trials N] [--repeat R]
"""

import argparse
import time

import numpy as np

from dmtfb import kernels
from dmtfb.rng import Streams
from dmtfb.sim import draw_fading

SHAPES = [(1, 1, 1, 2), (1, 2, 2, 3), (2, 2, 1, 3), (2, 4, 3, 4)]  # (L, n, m, K)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    if not kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed")
    print(f"{'L,n,m,K':>10} {'numpy s':>10} {'numba s':>10} {'speedup':>8}  agree")
    for L, n, m, K in SHAPES:
        gen = Streams(0).generator(L, n, m, K)
        H = draw_fading(gen, args.trials, L, n, m)
        rates = np.full(L, 0.3 * min(m, n))
        levels = np.geomspace(10.0, 1000.0, K)
        kernels.level_outage(H[:10], rates, levels, m, use_numba=True)  # compile
        t_np, a = best_of(lambda: kernels.level_outage(H, rates, levels, m, use_numba=False),
                          args.repeat)
        t_nb, b = best_of(lambda: kernels.level_outage(H, rates, levels, m, use_numba=True),
                          args.repeat)
        print(f"{f'{L},{n},{m},{K}':>10} {t_np:10.3f} {t_nb:10.3f} {t_np / t_nb:8.2f}  "
              f"{np.array_equal(a, b)}")


if __name__ == "__main__":
    main()
