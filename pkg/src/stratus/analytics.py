"""Closed-form throughput models for leader-based BFT with and without a
shared mempool.

Units: capacity C in bits/s, every size in bits, rates in tx/s.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable

from .core import ConfigError


@dataclass(frozen=True)
class AnalyticParams:
    capacity: float  # C
    tx_size: float  # B
    n: int
    vote_size: float  # sigma
    proposal_size: float  # K
    mb_size: float  # eta
    id_size: float  # gamma

    def __post_init__(self) -> None:
        for name in ("capacity", "tx_size", "vote_size", "proposal_size", "mb_size", "id_size"):
            if getattr(self, name) <= 0:
                raise ConfigError(name, "must be positive")
        if self.n < 4:
            raise ConfigError("n", "must be >= 4")


def tmax_lbft(C: float, B: float, n: int) -> float:
    if n < 2:
        raise ValueError("n must be >= 2")
    return C / (B * (n - 1))


def tmax_pbft_batched(C: float, B: float, K: float, sigma: float, n: int) -> float:
    if K < B:
        raise ValueError("proposal size K must be >= tx size B")
    leader = C / (n * K + 4 * (n - 1) * sigma)
    follower = C / (K + 4 * (n - 1) * sigma)
    return (K / B) * min(leader, follower)


def smp_leader_workload(K: float, eta: float, gamma: float, n: int) -> float:
    return K * eta / gamma + (n - 1) * K


def smp_nonleader_workload(K: float, eta: float, gamma: float) -> float:
    return 2 * K * eta / gamma + K


def tmax_smp(C: float, B: float, K: float, eta: float, gamma: float, n: int) -> float:
    if n < 3:
        raise ValueError("n must be >= 3")
    leader = C / smp_leader_workload(K, eta, gamma, n)
    follower = C / smp_nonleader_workload(K, eta, gamma)
    return (K * eta / (gamma * B)) * min(leader, follower)


def optimal_eta(gamma: float, n: int) -> float:
    """Microblock size that balances leader and non-leader workload."""
    return (n - 2) * gamma


def tmax_smp_optimal(C: float, B: float, n: int) -> float:
    return C * (n - 2) / (B * (2 * n - 3))


def sweep_csv(ns: Iterable[int], C: float, B: float, K: float, sigma: float, gamma: float,
              eta: float | None = None) -> str:
    """One row per n; ``eta`` defaults to the optimal size for each n."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "tmax_lbft", "tmax_pbft_batched", "tmax_smp", "eta", "smp_over_lbft"])
    for n in ns:
        e = optimal_eta(gamma, n) if eta is None else eta
        lb = tmax_lbft(C, B, n)
        pb = tmax_pbft_batched(C, B, K, sigma, n)
        sm = tmax_smp(C, B, K, e, gamma, n)
        w.writerow([n, f"{lb:.6e}", f"{pb:.6e}", f"{sm:.6e}", f"{e:.6g}", f"{sm / lb:.6f}"])
    return buf.getvalue()
