"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

Both paths are called directly so one process measures both; the first numba
call (compilation, or the on-disk cache load) is excluded. Outputs are checked
for agreement before timing.
"""

from __future__ import annotations

import argparse
import sys
import timeit

import numpy as np

from stratus import kernels as k


def cases(rng: np.random.Generator):
    st = rng.exponential(0.2, 100)
    cdf = np.cumsum(k._zipf_pmf_np(100, 1.01, 1.0))
    cdf[-1] = 1.0
    u = rng.random(1_000_000)
    labels = rng.integers(0, 100, 1_000_000)
    times = np.sort(rng.random(200_000) * 60.0)
    weights = rng.integers(1, 500, times.size).astype(np.float64)
    keys = rng.random((2000, 4, 99))
    return [
        ("percentile(window=100)", k._percentile_np, "_percentile_nb", (st, 95.0)),
        ("zipf_pmf(n=100000)", k._zipf_pmf_np, "_zipf_pmf_nb", (100_000, 1.01, 1.0)),
        ("sample_categorical(1e6)", k._sample_categorical_np, "_sample_categorical_nb", (cdf, u)),
        ("bincount(1e6)", k._bincount_np, "_bincount_nb", (labels, 100)),
        ("bucket_sum(2e5)", k._bucket_sum_np, "_bucket_sum_nb", (times, weights, 0.0, 1.0, 60)),
        ("candidate_counts(2000x4)", k._candidate_counts_np, "_candidate_counts_nb", (99, 3, 4, keys)),
        ("binom_tail(99, 3/99, 7)", k._binom_tail_np, "_binom_tail_nb", (99, 3 / 99, 7)),
    ]


def best_of(fn, args, repeat: int) -> float:
    t = timeit.Timer(lambda: fn(*args))
    number, _ = t.autorange()
    return min(t.repeat(repeat, number)) / number


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not k.HAS_NUMBA:
        print("numba unavailable (or STRATUS_NUMBA=0); timing numpy only", file=sys.stderr)
    rng = np.random.default_rng(7)
    print(f"{'kernel':28s} {'numpy':>12s} {'numba':>12s} {'speedup':>8s}")
    for name, np_fn, nb_name, fargs in cases(rng):
        t_np = best_of(np_fn, fargs, args.repeat)
        nb_fn = getattr(k, nb_name, None)
        if nb_fn is None:
            print(f"{name:28s} {t_np * 1e3:10.3f}ms {'-':>12s} {'-':>8s}")
            continue
        ref, got = np_fn(*fargs), nb_fn(*fargs)  # also triggers compilation
        if not np.allclose(ref, got, rtol=1e-12, atol=0.0):
            print(f"{name}: numba and numpy disagree", file=sys.stderr)
            return 1
        t_nb = best_of(nb_fn, fargs, args.repeat)
        print(f"{name:28s} {t_np * 1e3:10.3f}ms {t_nb * 1e3:10.3f}ms {t_np / t_nb:7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
