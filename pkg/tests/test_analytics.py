import csv
import io
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stratus.analytics import (
    AnalyticParams,
    optimal_eta,
    smp_leader_workload,
    smp_nonleader_workload,
    sweep_csv,
    tmax_lbft,
    tmax_pbft_batched,
    tmax_smp,
    tmax_smp_optimal,
)
from stratus.core import ConfigError

# exact rational re-derivations, written independently of the module


def lbft_exact(C, B, n):
    return F(C) / (F(B) * (n - 1))


def pbft_exact(C, B, K, s, n):
    C, B, K, s = map(F, (C, B, K, s))
    per_leader = n * K + 4 * (n - 1) * s
    per_follower = K + 4 * (n - 1) * s
    return K / B * C / max(per_leader, per_follower)


def smp_exact(C, B, K, eta, g, n):
    C, B, K, eta, g = map(F, (C, B, K, eta, g))
    ids_per_proposal = K / g
    lead = ids_per_proposal * eta + (n - 1) * K
    follow = 2 * ids_per_proposal * eta + K
    return ids_per_proposal * eta / B * C / max(lead, follow)


def grid(points=100, seed=7):
    rng = np.random.default_rng(seed)
    for _ in range(points):
        n = int(rng.integers(4, 500))
        B = float(rng.uniform(64, 4096))
        yield dict(
            C=float(rng.uniform(1e6, 1e10)),
            B=B,
            K=B * float(rng.uniform(1, 5000)),
            s=float(rng.uniform(1, 2000)),
            eta=float(rng.uniform(1e3, 1e7)),
            g=float(rng.uniform(32, 512)),
            n=n,
        )


def close(x, exact, rel):
    return abs(F(x) - exact) <= rel * abs(exact)


def test_grid_matches_exact_recomputation():
    for p in grid():
        assert close(tmax_lbft(p["C"], p["B"], p["n"]), lbft_exact(p["C"], p["B"], p["n"]), 1e-12)
        assert close(tmax_pbft_batched(p["C"], p["B"], p["K"], p["s"], p["n"]),
                     pbft_exact(p["C"], p["B"], p["K"], p["s"], p["n"]), 1e-12)
        assert close(tmax_smp(p["C"], p["B"], p["K"], p["eta"], p["g"], p["n"]),
                     smp_exact(p["C"], p["B"], p["K"], p["eta"], p["g"], p["n"]), 1e-12)


class TestLbft:
    def test_example(self):
        assert tmax_lbft(100, 1, 5) == 25

    def test_doubling_n_halves(self):
        assert tmax_lbft(1e9, 1024, 1000) / tmax_lbft(1e9, 1024, 2000) == pytest.approx(2, rel=0.02)


class TestPbft:
    def test_no_vote_overhead(self):
        assert tmax_pbft_batched(1e9, 1024, 2.048e6, 0, 16) == pytest.approx(1e9 / (16 * 1024), rel=1e-15)

    def test_large_batches_approach_c_over_nb(self):
        assert tmax_pbft_batched(1e9, 1024, 1e9, 576, 16) == pytest.approx(1e9 / (16 * 1024), rel=0.01)

    def test_frozen_value(self):
        # 1e6/1024 * 1e9 / (64e6 + 4*63*800)
        assert tmax_pbft_batched(1e9, 1024, 1e6, 800, 64) == pytest.approx(15210.874806858395, rel=1e-14)

    def test_k_below_b_rejected(self):
        with pytest.raises(ValueError):
            tmax_pbft_batched(1e9, 1024, 512, 0, 4)


class TestSmp:
    def test_optimal_eta(self):
        assert optimal_eta(256, 4) == 512

    @pytest.mark.parametrize("n", [4, 5, 16, 64, 100, 1000])
    def test_branches_equal_at_optimum(self, n):
        K, g = 2.048e6, 256.0
        eta = optimal_eta(g, n)
        assert smp_leader_workload(K, eta, g, n) == pytest.approx(smp_nonleader_workload(K, eta, g), rel=1e-9)
        lead, follow = (F(K) * F(eta) / F(g) + (n - 1) * F(K), 2 * F(K) * F(eta) / F(g) + F(K))
        assert lead == follow

    @pytest.mark.parametrize("n", [4, 10, 100, 400])
    def test_closed_form_at_optimum(self, n):
        C, B, K, g = 1e9, 1024.0, 2.048e6, 256.0
        assert tmax_smp(C, B, K, optimal_eta(g, n), g, n) == pytest.approx(tmax_smp_optimal(C, B, n), rel=1e-12)
        assert close(tmax_smp_optimal(C, B, n), F(C) * (n - 2) / (F(B) * (2 * n - 3)), 1e-12)

    @pytest.mark.parametrize("n", [100, 200, 400, 1000])
    def test_large_n_limit(self, n):
        assert tmax_smp_optimal(1e9, 1024, n) == pytest.approx(1e9 / (2 * 1024), rel=0.02)

    def test_binding_branch_switches_at_optimum(self):
        C, B, K, g, n = 1e9, 1024.0, 2.048e6, 256.0, 16
        eta = optimal_eta(g, n)
        below, above = eta * 0.9, eta * 1.1
        assert smp_leader_workload(K, below, g, n) > smp_nonleader_workload(K, below, g)
        assert smp_leader_workload(K, above, g, n) < smp_nonleader_workload(K, above, g)
        # past the balance point the non-leader bound binds and the rate stays under C/(2B)
        assert tmax_smp(C, B, K, above, g, n) < C / (2 * B)


@given(st.integers(4, 2000), st.floats(1e6, 1e11), st.floats(8, 1e5), st.floats(8, 4096))
def test_every_rate_below_c_over_b_and_smp_beats_lbft(n, C, B, g):
    K = B * 100
    s = 576.0
    for rate in (tmax_lbft(C, B, n), tmax_pbft_batched(C, B, K, s, n), tmax_smp(C, B, K, optimal_eta(g, n), g, n)):
        assert 0 < rate < C / B
    smp = tmax_smp(C, B, K, optimal_eta(g, n), g, n)
    assert smp >= tmax_lbft(C, B, n) * (1 - 1e-12)


def test_advantage_ratio_tends_to_half_n():
    n = 10_000
    ratio = tmax_smp_optimal(1e9, 1024, n) / tmax_lbft(1e9, 1024, n)
    assert ratio == pytest.approx((n - 1) / 2, rel=1e-3)


def test_params_validation():
    AnalyticParams(1e9, 1024, 4, 576, 2e6, 512, 256)
    with pytest.raises(ConfigError) as ei:
        AnalyticParams(1e9, 0, 4, 576, 2e6, 512, 256)
    assert ei.value.field == "tx_size"
    with pytest.raises(ConfigError):
        AnalyticParams(1e9, 1024, 3, 576, 2e6, 512, 256)


def test_sweep_csv_rows():
    text = sweep_csv([4, 16, 100], 1e9, 1024, 2.048e6, 576, 256)
    rows = list(csv.DictReader(io.StringIO(text)))
    assert [r["n"] for r in rows] == ["4", "16", "100"]
    assert float(rows[0]["eta"]) == 512
    assert float(rows[2]["tmax_smp"]) == pytest.approx(tmax_smp_optimal(1e9, 1024, 100), rel=1e-6)
    assert all(float(r["smp_over_lbft"]) >= 1 for r in rows)
