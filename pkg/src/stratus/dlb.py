"""Distributed load balancing: stable-time busy detection and proxy forwarding.

A busy replica samples ``d`` peers (power of d choices), forwards its
microblock to the least loaded responder and bans that proxy until a proof for
the microblock shows up. A timeout re-samples; the ban list is cleared
periodically.
"""

from __future__ import annotations

import statistics
from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .core import DIGEST_SIZE, HEADER_BYTES, Digest, Kind, Microblock, ProtocolParams
import numpy as np

from .kernels import binom_tail, candidate_counts, percentile

if TYPE_CHECKING:
    from .replica import Replica


class StEstimator:
    """Sliding window of stable times and the busy threshold derived from it.

    With no configured baseline, the first ``st_warmup`` samples calibrate it:
    baseline = median, epsilon = population standard deviation.
    """

    def __init__(self, params: ProtocolParams) -> None:
        self.window: deque[float] = deque(maxlen=params.window_size)
        self.percentile = params.percentile
        self.baseline = params.st_baseline
        self.epsilon = params.st_epsilon
        self.beta = params.st_beta
        self.warmup = params.st_warmup
        self._warm: list[float] = []
        self.current_st: float | None = None

    def push(self, st: float) -> None:
        self.window.append(st)
        self.current_st = percentile(self.window, self.percentile)
        if self.baseline is None or self.epsilon is None:
            self._warm.append(st)
            if len(self._warm) >= self.warmup:
                if self.baseline is None:
                    self.baseline = statistics.median(self._warm)
                if self.epsilon is None:
                    self.epsilon = statistics.pstdev(self._warm)
                self._warm = []

    @property
    def threshold(self) -> float | None:
        if self.baseline is None:
            return None
        return self.baseline + (self.epsilon or 0.0) + self.beta

    def is_busy(self) -> bool:
        th = self.threshold
        if self.current_st is None or th is None:
            return False
        return self.current_st > th

    def load_status(self) -> float | None:
        if self.is_busy():
            return None
        return 0.0 if self.current_st is None else self.current_st


@dataclass
class _Pending:
    mb: Microblock
    asked: list[int] = field(default_factory=list)
    replies: set[int] = field(default_factory=set)
    timer: object | None = None


@dataclass
class ForwardState:
    samples: dict[Digest, dict[int, float]] = field(default_factory=dict)
    ban_list: set[int] = field(default_factory=set)
    in_flight: dict[Digest, tuple[int, float]] = field(default_factory=dict)


class LoadBalancer:
    def __init__(self, replica: "Replica", enabled: bool = True) -> None:
        self.r = replica
        self.enabled = enabled
        self.est = StEstimator(replica.params)
        self.state = ForwardState()
        self._sampling: dict[Digest, _Pending] = {}
        self._forwarded: dict[Digest, tuple[Microblock, object]] = {}
        self.forwards = 0
        self.self_broadcasts = 0
        self.rejects = 0
        self.reforwards = 0
        self.proxied = 0
        self.reset_timer = None

    def start(self) -> None:
        if self.enabled:
            self.reset_timer = self.r.set_timer(self.r.params.banlist_reset_period, "reset", None)

    # ------------------------------------------------------------ estimation
    def record_stable_time(self, st: float) -> None:
        self.est.push(st)

    def is_busy(self) -> bool:
        return self.est.is_busy()

    def get_load_status(self) -> float | None:
        return self.est.load_status()

    # ------------------------------------------------------------ forwarding
    def on_new_microblock(self, mb: Microblock) -> None:
        if self.enabled and self.is_busy():
            self.forward_load(mb)
        else:
            self.r.pab.broadcast(mb)

    def forward_load(self, mb: Microblock) -> None:
        r = self.r
        n = r.params.n_replicas
        others = [i for i in range(n) if i != r.rid]
        picked = r.rng.sample(others, r.params.d)
        asked = sorted(i for i in picked if i not in self.state.ban_list)
        pend = _Pending(mb, asked)
        self._sampling[mb.id] = pend
        self.state.samples[mb.id] = {}
        for peer in asked:
            r.send(peer, Kind.LB_QUERY, mb.id, HEADER_BYTES + DIGEST_SIZE)
        pend.timer = r.set_timer(r.params.tau_sample, "sample", mb.id)

    def on_lb_query(self, env) -> None:
        r = self.r
        w = r.advertised_load()
        r.send(env.src, Kind.LB_INFO, (env.body, w), HEADER_BYTES + DIGEST_SIZE + 8)

    def on_lb_info(self, env) -> None:
        mb_id, w = env.body
        pend = self._sampling.get(mb_id)
        if pend is None or env.src not in pend.asked or env.src in pend.replies:
            return
        pend.replies.add(env.src)
        if w is not None:
            self.state.samples[mb_id][env.src] = w
        if len(pend.replies) == len(pend.asked):
            self._decide(mb_id)

    def on_sample_timeout(self, mb_id: Digest) -> None:
        if mb_id in self._sampling:
            self._sampling[mb_id].timer = None
            self._decide(mb_id)

    def _decide(self, mb_id: Digest) -> None:
        r = self.r
        pend = self._sampling.pop(mb_id)
        if pend.timer is not None:
            pend.timer.cancel()
        samples = self.state.samples.pop(mb_id, {})
        if not samples:
            self.self_broadcasts += 1
            r.pab.broadcast(pend.mb)
            return
        proxy = min(samples, key=lambda k: (samples[k], k))
        self._send_forward(pend.mb, proxy)
        extra = r.extra_forward_target(pend.mb, proxy)
        if extra is not None:
            r.send(extra, Kind.LB_FORWARD, pend.mb, pend.mb.size_bytes + HEADER_BYTES)

    def _send_forward(self, mb: Microblock, proxy: int) -> None:
        r = self.r
        self.forwards += 1
        self.state.ban_list.add(proxy)
        deadline = r.sim.now + r.params.tau_forward
        self.state.in_flight[mb.id] = (proxy, deadline)
        r.send(proxy, Kind.LB_FORWARD, mb, mb.size_bytes + HEADER_BYTES)
        timer = r.set_timer(r.params.tau_forward, "forward", mb.id)
        self._forwarded[mb.id] = (mb, timer)

    def on_forward_timeout(self, mb_id: Digest) -> None:
        entry = self._forwarded.pop(mb_id, None)
        if entry is None:
            return
        self.state.in_flight.pop(mb_id, None)
        if self.r.pab.has_proof(mb_id):
            return
        self.reforwards += 1
        # the unresponsive proxy stays banned until the next reset
        self.forward_load(entry[0])

    def on_proof(self, mb_id: Digest) -> None:
        entry = self._forwarded.pop(mb_id, None)
        if entry is None:
            return
        entry[1].cancel()
        proxy, _ = self.state.in_flight.pop(mb_id)
        self.state.ban_list.discard(proxy)

    def on_lb_reject(self, env) -> None:
        mb_id = env.body
        entry = self._forwarded.pop(mb_id, None)
        if entry is None:
            return
        entry[1].cancel()
        self.state.in_flight.pop(mb_id, None)
        self.rejects += 1
        self.r.pab.broadcast(entry[0])

    def on_lb_forward(self, env) -> None:
        r = self.r
        mb: Microblock = env.body
        if mb.size_bytes < r.params.min_forward_bytes:
            r.send(env.src, Kind.LB_REJECT, mb.id, HEADER_BYTES + DIGEST_SIZE)
            return
        if not r.acts_as_proxy:
            return
        self.proxied += 1
        r.pab.broadcast(mb, origin=env.src)

    # -------------------------------------------------------------- ban list
    def reset_ban_list(self) -> None:
        self.state.ban_list.clear()
        # proxies still carrying a forward stay banned
        for proxy, _ in self.state.in_flight.values():
            self.state.ban_list.add(proxy)

    def on_reset_timeout(self) -> None:
        self.reset_ban_list()
        self.reset_timer = self.r.set_timer(self.r.params.banlist_reset_period, "reset", None)


# ------------------------------------------------------- sampling analysis
def overload_probability(n: int, d: int, threshold: int) -> float:
    """Chance that one replica is a candidate of more than ``threshold`` of
    the other n-1 busy replicas, each sampling d peers: Binomial(n-1, d/(n-1))."""
    return binom_tail(n - 1, d / (n - 1), threshold)


def simulate_candidate_counts(n: int, d: int, trials: int, seed: int = 0) -> np.ndarray:
    """Monte-Carlo counterpart: per trial, how many of the n-1 other replicas
    picked a fixed replica among their d samples."""
    rng = np.random.default_rng(seed)
    out = []
    chunk = max(1, 2_000_000 // ((n - 1) * (n - 1)))
    for start in range(0, trials, chunk):
        keys = rng.random((min(chunk, trials - start), n - 1, n - 1))
        out.append(candidate_counts(n - 1, d, n - 1, keys))
    return np.concatenate(out)
