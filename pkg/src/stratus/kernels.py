"""Numeric kernels with a numba path and a pure-numpy fallback.

Set ``STRATUS_NUMBA=0`` to force the numpy implementations (the benchmark in
``benchmarks/bench_kernels.py`` runs both). Both paths must agree exactly on
integer outputs and to rounding on float outputs.
"""

from __future__ import annotations

import math
import os

import numpy as np

_WANT_NUMBA = os.environ.get("STRATUS_NUMBA", "1").lower() not in ("0", "false", "no", "off")

try:
    if not _WANT_NUMBA:
        raise ImportError("disabled by STRATUS_NUMBA")
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised via the env flag
    HAS_NUMBA = False


def nearest_rank_index(n: int, percentile: float) -> int:
    """0-based index of the nearest-rank percentile in a sorted list of n values."""
    rank = math.ceil(percentile / 100.0 * n)
    return min(max(rank, 1), n) - 1


def _percentile_np(values: np.ndarray, percentile: float) -> float:
    v = np.sort(np.asarray(values, dtype=np.float64))
    return float(v[nearest_rank_index(len(v), percentile)])


def _zipf_pmf_np(n: int, s: float, v: float) -> np.ndarray:
    w = 1.0 / np.power(v + np.arange(n, dtype=np.float64), s)
    return w / w.sum()


def _sample_categorical_np(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, len(cdf) - 1).astype(np.int64)


def _bincount_np(labels: np.ndarray, n: int) -> np.ndarray:
    return np.bincount(np.asarray(labels, dtype=np.int64), minlength=n)[:n].astype(np.int64)


def _bucket_sum_np(times: np.ndarray, weights: np.ndarray, t0: float, width: float, nbuckets: int) -> np.ndarray:
    times = np.asarray(times, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    idx = np.floor((times - t0) / width).astype(np.int64)
    keep = (idx >= 0) & (idx < nbuckets)
    return np.bincount(idx[keep], weights=weights[keep], minlength=nbuckets)[:nbuckets]


def _candidate_counts_np(n_others: int, d: int, n_samplers: int, keys: np.ndarray) -> np.ndarray:
    """Per trial, how many of ``n_samplers`` independent d-subsets of
    ``n_others`` replicas contain replica 0.

    ``keys`` has shape (trials, n_samplers, n_others) of uniforms; each
    sampler's d-subset is the d smallest keys (a uniform random subset).
    """
    kth = np.partition(keys, d - 1, axis=2)[:, :, d - 1:d]
    chosen = keys[:, :, 0:1] <= kth
    return chosen[:, :, 0].sum(axis=1).astype(np.int64)


def _binom_tail_np(n: int, p: float, k: int) -> float:
    """P(X > k) for X ~ Binomial(n, p), summed exactly term by term."""
    total = 0.0
    for j in range(k + 1, n + 1):
        total += math.comb(n, j) * p**j * (1 - p) ** (n - j)
    return total


if HAS_NUMBA:

    @njit(cache=True)
    def _percentile_nb(values, percentile):
        v = np.sort(values.astype(np.float64))
        n = v.shape[0]
        rank = int(math.ceil(percentile / 100.0 * n))
        if rank < 1:
            rank = 1
        if rank > n:
            rank = n
        return v[rank - 1]

    @njit(cache=True)
    def _zipf_pmf_nb(n, s, v):
        w = np.empty(n, dtype=np.float64)
        tot = 0.0
        for r in range(n):
            w[r] = 1.0 / (v + r) ** s
            tot += w[r]
        for r in range(n):
            w[r] /= tot
        return w

    @njit(cache=True)
    def _sample_categorical_nb(cdf, u):
        out = np.empty(u.shape[0], dtype=np.int64)
        last = cdf.shape[0] - 1
        for i in range(u.shape[0]):
            j = np.searchsorted(cdf, u[i], side="right")
            out[i] = j if j <= last else last
        return out

    @njit(cache=True)
    def _bincount_nb(labels, n):
        out = np.zeros(n, dtype=np.int64)
        for i in range(labels.shape[0]):
            x = labels[i]
            if 0 <= x < n:
                out[x] += 1
        return out

    @njit(cache=True)
    def _bucket_sum_nb(times, weights, t0, width, nbuckets):
        out = np.zeros(nbuckets, dtype=np.float64)
        for i in range(times.shape[0]):
            b = int(math.floor((times[i] - t0) / width))
            if 0 <= b < nbuckets:
                out[b] += weights[i]
        return out

    @njit(cache=True)
    def _candidate_counts_nb(n_others, d, n_samplers, keys):
        trials = keys.shape[0]
        out = np.zeros(trials, dtype=np.int64)
        for t in range(trials):
            c = 0
            for s in range(n_samplers):
                mine = keys[t, s, 0]
                smaller = 0
                for j in range(1, n_others):
                    if keys[t, s, j] < mine:
                        smaller += 1
                if smaller < d:
                    c += 1
            out[t] = c
        return out

    @njit(cache=True)
    def _binom_tail_nb(n, p, k):
        # log-space terms avoid overflow of the binomial coefficient
        total = 0.0
        for j in range(k + 1, n + 1):
            lc = math.lgamma(n + 1) - math.lgamma(j + 1) - math.lgamma(n - j + 1)
            total += math.exp(lc + j * math.log(p) + (n - j) * math.log1p(-p))
        return total


def percentile(values, pct: float) -> float:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("percentile of an empty window")
    if HAS_NUMBA:
        return float(_percentile_nb(arr, float(pct)))
    return _percentile_np(arr, pct)


def zipf_pmf(n: int, s: float, v: float) -> np.ndarray:
    """P(rank r) proportional to 1/(v+r)^s for r = 0..n-1."""
    if n < 1 or s <= 0 or v <= 0:
        raise ValueError("zipf_pmf needs n >= 1, s > 0, v > 0")
    if HAS_NUMBA:
        return _zipf_pmf_nb(int(n), float(s), float(v))
    return _zipf_pmf_np(n, s, v)


def sample_categorical(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.asarray(cdf, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if HAS_NUMBA:
        return _sample_categorical_nb(cdf, u)
    return _sample_categorical_np(cdf, u)


def bincount(labels, n: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if HAS_NUMBA:
        return _bincount_nb(labels, int(n))
    return _bincount_np(labels, n)


def bucket_sum(times, weights, t0: float, width: float, nbuckets: int) -> np.ndarray:
    times = np.asarray(times, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if HAS_NUMBA:
        return _bucket_sum_nb(times, weights, float(t0), float(width), int(nbuckets))
    return _bucket_sum_np(times, weights, t0, width, nbuckets)


def candidate_counts(n_others: int, d: int, n_samplers: int, keys: np.ndarray) -> np.ndarray:
    keys = np.ascontiguousarray(keys, dtype=np.float64)
    if HAS_NUMBA:
        return _candidate_counts_nb(int(n_others), int(d), int(n_samplers), keys)
    return _candidate_counts_np(n_others, d, n_samplers, keys)


def binom_tail(n: int, p: float, k: int) -> float:
    if HAS_NUMBA and 0.0 < p < 1.0:
        return float(_binom_tail_nb(int(n), float(p), int(k)))
    return _binom_tail_np(n, p, k)
