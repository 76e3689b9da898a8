"""Compare the numba kernels with their pure-numpy fallbacks.

    python benchmarks/bench_kernels.py --sizes 1024 16384 --repeat 5

Each kernel is run once per backend before timing so compilation is not
counted; the two backends must agree exactly on every input.
"""
import argparse
import time

import numpy as np

from holderip import _kernels as K

ALPHA = 0.25


def _cases(S, y, n):
    gap = max(1, n // 16)
    return {
        "schauder_sup": lambda nb: K.schauder_sup(S, ALPHA, use_numba=nb)[0],
        "max_pair_ratio": lambda nb: K.max_pair_ratio(S, ALPHA, use_numba=nb),
        "increment_ratio": lambda nb: K.increment_ratio(y, ALPHA, gap, use_numba=nb),
    }


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[1024, 4096, 16384])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<16} {'n':>7} {'numba_s':>10} {'numpy_s':>10} {'speedup':>8}")
    for n in args.sizes:
        y = rng.standard_normal(n)
        S = np.concatenate([[0.0], np.cumsum(y)]) / np.sqrt(n)
        for name, fn in _cases(S, y, n).items():
            a, b = fn(True), fn(False)
            if a != b:
                raise SystemExit(f"{name} n={n}: backends disagree ({a!r} vs {b!r})")
            t_nb = _best(lambda: fn(True), args.repeat)
            t_np = _best(lambda: fn(False), args.repeat)
            print(f"{name:<16} {n:>7} {t_nb:>10.5f} {t_np:>10.5f} {t_np / t_nb:>8.1f}")


if __name__ == "__main__":
    main()
