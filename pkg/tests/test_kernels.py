import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from scipy import stats

from stratus import kernels as k

needs_numba = pytest.mark.skipif(not k.HAS_NUMBA, reason="numba disabled")

floats = hnp.arrays(np.float64, st.integers(1, 300), elements=st.floats(0, 1e4, allow_nan=False))


@pytest.mark.parametrize("n, pct, idx", [(100, 95, 94), (1, 95, 0), (20, 50, 9), (3, 100, 2), (10, 0, 0)])
def test_nearest_rank_index(n, pct, idx):
    assert k.nearest_rank_index(n, pct) == idx


def test_percentile_empty():
    with pytest.raises(ValueError):
        k.percentile([], 95)


def test_binom_tail_matches_scipy():
    for n, p, t in [(99, 3 / 99, 7), (10, 0.5, 3), (400, 0.01, 2)]:
        assert k.binom_tail(n, p, t) == pytest.approx(stats.binom.sf(t, n, p), rel=1e-10)


def test_bucket_sum_drops_out_of_range():
    out = k.bucket_sum([-0.5, 0.2, 0.9, 1.0, 2.99, 3.0], [1, 2, 3, 4, 5, 6], 0.0, 1.0, 3)
    assert out.tolist() == [5.0, 4.0, 5.0]


@needs_numba
class TestParity:
    @settings(max_examples=40, deadline=None)
    @given(floats, st.floats(0, 100))
    def test_percentile(self, v, pct):
        assert k._percentile_nb(v, pct) == k._percentile_np(v, pct)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 500), st.floats(0.1, 3), st.floats(0.1, 20))
    def test_zipf(self, n, s, v):
        np.testing.assert_allclose(k._zipf_pmf_nb(n, s, v), k._zipf_pmf_np(n, s, v), rtol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31))
    def test_sampling_and_counting(self, seed):
        rng = np.random.default_rng(seed)
        cdf = np.cumsum(k._zipf_pmf_np(50, 1.01, 1.0))
        cdf[-1] = 1.0
        u = rng.random(5000)
        a = k._sample_categorical_nb(cdf, u)
        assert np.array_equal(a, k._sample_categorical_np(cdf, u))
        assert np.array_equal(k._bincount_nb(a, 50), k._bincount_np(a, 50))
        times, w = rng.random(500) * 10, rng.random(500)
        np.testing.assert_allclose(k._bucket_sum_nb(times, w, 0.0, 1.0, 10),
                                   k._bucket_sum_np(times, w, 0.0, 1.0, 10), rtol=1e-12)
        keys = rng.random((50, 6, 20))
        assert np.array_equal(k._candidate_counts_nb(20, 3, 6, keys), k._candidate_counts_np(20, 3, 6, keys))

    def test_binom_tail(self):
        assert k._binom_tail_nb(99, 3 / 99, 7) == pytest.approx(k._binom_tail_np(99, 3 / 99, 7), rel=1e-12)


def test_numpy_fallback_via_env():
    env = dict(os.environ, STRATUS_NUMBA="0")
    code = ("from stratus import kernels as k; from stratus.workload import ZIPF1, top_decile_mass;"
            "print(k.HAS_NUMBA, round(top_decile_mass(ZIPF1.pmf(100)), 10), k.percentile(list(range(1, 101)), 95))")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["False", "0.5709233833", "95.0"]
