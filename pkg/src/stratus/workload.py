"""Client transaction generators with uniform or Zipfian replica assignment."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .core import DEFAULT_PAYLOAD, ConfigError, Transaction
from .kernels import bincount, sample_categorical, zipf_pmf

# ids are stream * ID_STRIDE + k, so distinct streams never collide
ID_STRIDE = 1 << 40


@dataclass(frozen=True)
class Assignment:
    kind: str = "uniform"  # "uniform" | "zipf"
    s: float = 1.01
    v: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("uniform", "zipf"):
            raise ConfigError("workload.assignment", f"unknown assignment {self.kind!r}")
        if self.kind == "zipf" and (self.s <= 0 or self.v <= 0):
            raise ConfigError("workload.zipf", "s and v must be positive")

    def pmf(self, n: int) -> np.ndarray:
        if self.kind == "uniform":
            return np.full(n, 1.0 / n)
        return zipf_pmf(n, self.s, self.v)

    @property
    def label(self) -> str:
        if self.kind == "uniform":
            return "uniform"
        return f"zipf(s={self.s:g},v={self.v:g})"


UNIFORM = Assignment()
ZIPF1 = Assignment("zipf", 1.01, 1.0)
ZIPF10 = Assignment("zipf", 1.01, 10.0)


@dataclass(frozen=True)
class WorkloadSpec:
    rate_tx_per_s: float
    duration: float
    payload_bytes: int = len(DEFAULT_PAYLOAD)
    assignment: Assignment = UNIFORM
    seed: int = 0
    poisson: bool = False
    start: float = 0.0
    stream: int = 0

    def __post_init__(self) -> None:
        if self.rate_tx_per_s <= 0:
            raise ConfigError("workload.rate", "must be positive")
        if self.duration <= 0:
            raise ConfigError("workload.duration", "must be positive")
        if self.payload_bytes < 1:
            raise ConfigError("workload.payload_bytes", "must be >= 1")

    @property
    def count(self) -> int:
        return int(round(self.rate_tx_per_s * self.duration))


def _rng(spec: WorkloadSpec, purpose: str) -> np.random.Generator:
    return np.random.default_rng([spec.seed, spec.stream, {"assign": 1, "time": 2}[purpose]])


def assignments(spec: WorkloadSpec, n: int, count: int | None = None) -> np.ndarray:
    """Replica index for each of the first ``count`` transactions."""
    count = spec.count if count is None else count
    u = _rng(spec, "assign").random(count)
    cdf = np.cumsum(spec.assignment.pmf(n))
    cdf[-1] = 1.0
    return sample_categorical(cdf, u)


def assign_replica(spec: WorkloadSpec, k: int, n: int) -> int:
    return int(assignments(spec, n, k + 1)[k])


def arrival_times(spec: WorkloadSpec, count: int | None = None) -> np.ndarray:
    count = spec.count if count is None else count
    if spec.poisson:
        gaps = _rng(spec, "time").exponential(1.0 / spec.rate_tx_per_s, count)
        return spec.start + np.cumsum(gaps) - gaps[0]
    return spec.start + np.arange(count) / spec.rate_tx_per_s


def schedule(spec: WorkloadSpec, n: int) -> tuple[np.ndarray, np.ndarray]:
    return arrival_times(spec), assignments(spec, n)


def generate(spec: WorkloadSpec, sim, submit: Callable[[int, Transaction], None], n: int) -> int:
    """Schedule every transaction of ``spec`` into ``sim``.

    Events are chained (each arrival schedules the next) so the event heap
    stays small. ``submit(replica, tx)`` is called at the arrival time with the
    transaction stamped on receipt. Returns the number of transactions.
    """
    times, who = schedule(spec, n)
    times = times.tolist()
    who = who.tolist()
    total = len(times)
    if total == 0:
        return 0
    payload = bytes(spec.payload_bytes)
    base = spec.stream * ID_STRIDE

    def fire(k: int) -> None:
        now = sim.now
        submit(who[k], Transaction(base + k, payload, now, who[k]))
        k += 1
        # several arrivals can share one instant at high rates
        while k < total and times[k] <= now:
            submit(who[k], Transaction(base + k, payload, now, who[k]))
            k += 1
        if k < total:
            sim.call_at(times[k], fire, k)

    sim.call_at(times[0], fire, 0)
    return total


def top_decile_mass(pmf: Sequence[float]) -> float:
    p = np.sort(np.asarray(pmf, dtype=np.float64))[::-1]
    k = max(1, int(np.ceil(len(p) / 10)))
    return float(p[:k].sum())


def empirical_counts(spec: WorkloadSpec, n: int, count: int) -> np.ndarray:
    return bincount(assignments(spec, n, count), n)


def chi_square(counts: np.ndarray, pmf: np.ndarray) -> tuple[float, float]:
    """Pearson statistic and p-value of ``counts`` against ``pmf``."""
    counts = np.asarray(counts, dtype=np.float64)
    expected = np.asarray(pmf, dtype=np.float64) * counts.sum()
    res = stats.chisquare(counts, expected)
    return float(res.statistic), float(res.pvalue)
