"""Deterministic, seeded discrete-event network simulator.

Bandwidth is modelled at sender egress. Each replica owns one NIC with two
lanes:

* a consensus lane for ``Priority.CONSENSUS`` envelopes, which never waits
  behind data and pushes the data lane back by the time it used;
* a FIFO data lane gated by a token bucket whose refill rate is a fraction of
  the link bandwidth. Only messages that carry a microblock need tokens;
  small data-class messages (acks, fetch requests, load queries) go straight
  to the wire like consensus traffic but keep data-class ordering.

With prioritization disabled every envelope shares the data lane and the
token bucket is off. A broadcast is one egress job: all copies finish
serializing together, which is what parallel TCP streams sharing one uplink
look like. Arrivals are FIFO per (src, dst, class), and a data envelope never
overtakes an earlier consensus envelope on the same link. Inside a
fluctuation window every message draws its own delay and same-class messages
may reorder, as with per-packet netem jitter.
"""

from __future__ import annotations

import enum
import heapq
import io
import logging
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, NamedTuple

from .core import ConfigError, Kind, MessageEnvelope, Priority

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("t", "kind", "from", "to", "size", "tag")

# kinds that carry microblock content and therefore consume limiter tokens
TOKEN_KINDS = frozenset({Kind.PAB_MSG, Kind.PAB_RESPONSE, Kind.LB_FORWARD})


@dataclass(frozen=True)
class LinkModel:
    base_delay: float = 0.05
    jitter: float = 0.0
    bandwidth_bits_per_s: float = 100e6
    loss: float = 0.0

    def __post_init__(self) -> None:
        if self.base_delay < 0:
            raise ConfigError("base_delay", "must be >= 0")
        if self.jitter < 0 or self.jitter > self.base_delay:
            raise ConfigError("jitter", "must be in [0, base_delay] so delays stay non-negative")
        if self.bandwidth_bits_per_s <= 0:
            raise ConfigError("bandwidth_bits_per_s", "must be positive")
        if not 0.0 <= self.loss < 1.0:
            raise ConfigError("loss", "must be in [0, 1)")

    @property
    def delay_bound(self) -> float:
        return self.base_delay + self.jitter


class Behavior(enum.Enum):
    SILENT = "silent"
    SELECTIVE_BROADCAST = "selective-broadcast"
    CENSORING_PROXY = "censoring-proxy"
    FAKE_LOW_LOAD = "fake-low-load"
    DUPLICATE_FORWARD = "duplicate-forward"
    # leader-side attacks used by the safety suite
    PROOFLESS_LEADER = "proofless-leader"
    FORKING_LEADER = "forking-leader"


@dataclass(frozen=True)
class AdversarySpec:
    replica_set: frozenset[int]
    behavior: Behavior
    # SelectiveBroadcast recipients; None means "the upcoming leader plus just
    # enough replicas to reach the ack quorum"
    targets: tuple[int, ...] | None = None

    def validate(self, n: int, f: int) -> None:
        if len(self.replica_set) > f:
            raise ConfigError("adversary.replicas", f"{len(self.replica_set)} Byzantine replicas exceed f={f}")
        for r in self.replica_set:
            if not 0 <= r < n:
                raise ConfigError("adversary.replicas", f"replica {r} out of range")


class SimEvent(NamedTuple):
    at: float
    seq: int
    kind: str  # "deliver" | "timer" | "call"
    envelope: MessageEnvelope | None = None
    owner: Any = None
    tag: Any = None
    payload: Any = None


class Timer:
    __slots__ = ("owner", "tag", "payload", "at", "cancelled")

    def __init__(self, owner, tag, payload, at: float) -> None:
        self.owner = owner
        self.tag = tag
        self.payload = payload
        self.at = at
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True


class SimulationBudgetExceeded(RuntimeError):
    """Raised by the livelock guard; carries the recent event trace."""

    def __init__(self, message: str, trace: str) -> None:
        super().__init__(message)
        self.trace = trace


class _Job:
    __slots__ = ("envelopes", "nbytes")

    def __init__(self, envelopes: list[MessageEnvelope], nbytes: int) -> None:
        self.envelopes = envelopes
        self.nbytes = nbytes


class Nic:
    """Egress state of one replica."""

    def __init__(self, bandwidth_bps: float, token_rate_bytes: float | None, bucket_bytes: float) -> None:
        self.bandwidth = bandwidth_bps
        self.cons_busy_until = 0.0
        self.data_busy_until = 0.0
        self.queue: deque[_Job] = deque()
        self.wakeup_pending = False
        self.token_rate = token_rate_bytes
        self.bucket = bucket_bytes
        self.tokens = bucket_bytes
        self.token_time = 0.0
        self.queued_bytes = 0

    def refill(self, now: float) -> None:
        if self.token_rate is None:
            return
        self.tokens = min(self.bucket, self.tokens + (now - self.token_time) * self.token_rate)
        self.token_time = now


class Simulator:
    """Event loop, timers and the network model.

    ``prioritize`` enables the consensus lane and the token bucket; the
    baselines run without them.
    """

    def __init__(self, n: int, link: LinkModel, seed: int = 0, *, prioritize: bool = True,
                 token_fraction: float = 0.8, bucket_seconds: float = 0.05,
                 bandwidth_overrides: dict[int, float] | None = None,
                 max_events: int = 20_000_000, record_trace: bool = False,
                 trace_ring: int = 2000) -> None:
        if not 0.0 < token_fraction <= 1.0:
            raise ConfigError("token_fraction", "must be in (0, 1]")
        self.n = n
        self.link = link
        self.seed = seed
        self.now = 0.0
        self.prioritize = prioritize
        self.rng = random.Random(f"net:{seed}")
        self._heap: list[SimEvent] = []
        self._seq = 0
        self._msg_seq = 0
        self.handlers: dict[int, Any] = {}
        self.max_events = max_events
        self.events_processed = 0
        self._fluctuations: list[tuple[float, float, float, float, int]] = []
        self._last_arrival: dict[tuple[int, int, int], float] = {}
        self.nics: list[Nic] = []
        overrides = bandwidth_overrides or {}
        for r in range(n):
            bw = overrides.get(r, link.bandwidth_bits_per_s)
            rate = bw / 8 * token_fraction if prioritize else None
            bucket = max(bw / 8 * bucket_seconds, 1.0)
            self.nics.append(Nic(bw, rate, bucket))
        # accounting
        self.sent = 0
        self.delivered = 0
        self.dropped = 0
        self.bytes_out: list[dict[Kind, int]] = [dict() for _ in range(n)]
        self._ring: deque[tuple] = deque(maxlen=trace_ring)
        self.record_trace = record_trace
        self.trace: list[tuple] = []
        self._watchers: list[Callable[[MessageEnvelope, float], None]] = []

    # ------------------------------------------------------------------ events
    def _push(self, at: float, kind: str, envelope=None, owner=None, tag=None, payload=None) -> None:
        self._seq += 1
        heapq.heappush(self._heap, SimEvent(at, self._seq, kind, envelope, owner, tag, payload))

    def set_timer(self, owner, delay: float, tag, payload=None) -> Timer:
        if delay < 0:
            raise ValueError("timer delay must be >= 0")
        t = Timer(owner, tag, payload, self.now + delay)
        self._push(t.at, "timer", owner=owner, tag=t)
        return t

    def call_at(self, at: float, fn: Callable[[Any], None], arg=None) -> None:
        """Schedule a plain callback (workload arrivals, measurement hooks)."""
        self._push(max(at, self.now), "call", owner=fn, payload=arg)

    def register(self, replica_id: int, handler) -> None:
        self.handlers[replica_id] = handler

    def watch(self, fn: Callable[[MessageEnvelope, float], None]) -> None:
        self._watchers.append(fn)

    # ----------------------------------------------------------------- network
    def inject_fluctuation(self, start: float, duration: float, delay_range: tuple[float, float],
                           packet_bytes: int = 0) -> None:
        """During [start, start+duration] one-way delays are drawn uniformly
        from ``delay_range``.

        With ``packet_bytes`` > 0 the draw is per packet and a message arrives
        with its slowest packet, so large messages tend toward the upper end of
        the range (per-packet jitter with in-order reassembly).
        """
        lo, hi = delay_range
        if start < self.now:
            raise ValueError("fluctuation must start at or after the current time")
        if duration <= 0 or lo < 0 or hi < lo:
            raise ValueError("invalid fluctuation window")
        if packet_bytes < 0:
            raise ValueError("packet_bytes must be >= 0")
        self._fluctuations.append((start, start + duration, lo, hi, packet_bytes))

    def one_way_delay(self, at: float, size: int = 1) -> float:
        return self._delay(at, size)[0]

    def _delay(self, at: float, size: int) -> tuple[float, bool]:
        for start, end, lo, hi, pkt in self._fluctuations:
            if start <= at <= end:
                if hi == lo:
                    return lo, True
                u = self.rng.random()
                if pkt:
                    # max of k uniforms has the law of U ** (1/k)
                    k = -(-size // pkt)
                    if k > 1:
                        u = u ** (1.0 / k)
                return lo + (hi - lo) * u, True
        j = self.link.jitter
        if j == 0:
            return self.link.base_delay, False
        return self.link.base_delay + self.rng.uniform(-j, j), False

    def _envelope(self, kind: Kind, src: int, dst: int, body, size: int) -> MessageEnvelope:
        self._msg_seq += 1
        return MessageEnvelope(kind, src, dst, body, size, self._msg_seq)

    def send(self, src: int, dst: int, kind: Kind, body, size: int) -> MessageEnvelope:
        env = self._envelope(kind, src, dst, body, size)
        self._enqueue(src, [env], size)
        return env

    def broadcast(self, src: int, kind: Kind, body, size: int, dsts: Iterable[int] | None = None) -> list[MessageEnvelope]:
        """One egress job carrying a copy for every destination except ``src``."""
        if dsts is None:
            dsts = range(self.n)
        envs = [self._envelope(kind, src, d, body, size) for d in dsts if d != src]
        if envs:
            self._enqueue(src, envs, size * len(envs))
        return envs

    def _account(self, envs: list[MessageEnvelope]) -> None:
        for env in envs:
            acct = self.bytes_out[env.src]
            acct[env.kind] = acct.get(env.kind, 0) + env.size_bytes
        self.sent += len(envs)

    def _enqueue(self, src: int, envs: list[MessageEnvelope], nbytes: int) -> None:
        self._account(envs)
        nic = self.nics[src]
        if self.prioritize and (envs[0].priority is Priority.CONSENSUS or envs[0].kind not in TOKEN_KINDS):
            start = max(self.now, nic.cons_busy_until)
            dur = nbytes * 8 / nic.bandwidth
            nic.cons_busy_until = start + dur
            if nic.data_busy_until > self.now:
                nic.data_busy_until += dur
            self._schedule_deliveries(envs, start + dur)
            return
        nic.queue.append(_Job(envs, nbytes))
        nic.queued_bytes += nbytes
        if not nic.wakeup_pending:
            self._drain(src)

    def _drain(self, src: int) -> None:
        nic = self.nics[src]
        nic.wakeup_pending = False
        now = self.now
        while nic.queue:
            if nic.data_busy_until > now:
                nic.wakeup_pending = True
                self._push(nic.data_busy_until, "drain", owner=src)
                return
            job = nic.queue[0]
            if nic.token_rate is not None:
                nic.refill(now)
                need = min(job.nbytes, nic.bucket)
                # tolerance: refill arithmetic can land a hair below ``need``
                if nic.tokens < need - 1e-6:
                    nic.wakeup_pending = True
                    wait = max((need - nic.tokens) / nic.token_rate, 1e-9)
                    self._push(now + wait, "drain", owner=src)
                    return
                nic.tokens -= job.nbytes
            nic.queue.popleft()
            nic.queued_bytes -= job.nbytes
            end = now + job.nbytes * 8 / nic.bandwidth
            nic.data_busy_until = end
            self._schedule_deliveries(job.envelopes, end)

    def backlog_bytes(self, replica: int) -> int:
        return self.nics[replica].queued_bytes

    def _schedule_deliveries(self, envs: list[MessageEnvelope], departed: float) -> None:
        loss = self.link.loss
        last = self._last_arrival
        for env in envs:
            if loss and self.rng.random() < loss:
                self.dropped += 1
                continue
            delay, jittered = self._delay(departed, env.size_bytes)
            arrive = departed + delay
            cls = int(env.priority) if self.prioritize else 1
            key = (env.src, env.dst, cls)
            # inside a fluctuation window messages of one class may reorder
            # (per-message jitter); data still never overtakes consensus
            prev = 0.0 if jittered else last.get(key, 0.0)
            if cls == 1 and self.prioritize:
                prev = max(prev, last.get((env.src, env.dst, 0), 0.0))
            if arrive < prev:
                arrive = prev
            if arrive > last.get(key, 0.0):
                last[key] = arrive
            self._push(arrive, "deliver", envelope=env)

    # ---------------------------------------------------------------- running
    def run(self, until: float) -> int:
        """Drain events with ``at <= until`` in (at, seq) order."""
        heap = self._heap
        handlers = self.handlers
        ring = self._ring
        budget = self.max_events
        processed = 0
        while heap and heap[0].at <= until:
            ev = heapq.heappop(heap)
            self.now = ev.at
            processed += 1
            self.events_processed += 1
            if self.events_processed > budget:
                raise SimulationBudgetExceeded(
                    f"event budget {budget} exceeded at t={self.now:.6f}", self.dump_trace(ring))
            kind = ev.kind
            if kind == "deliver":
                env = ev.envelope
                self.delivered += 1
                rec = (ev.at, env.kind.value, env.src, env.dst, env.size_bytes, env.seq)
                ring.append(rec)
                if self.record_trace:
                    self.trace.append(rec)
                for w in self._watchers:
                    w(env, ev.at)
                h = handlers.get(env.dst)
                if h is not None:
                    h.receive(env)
            elif kind == "timer":
                t = ev.tag
                if t.cancelled:
                    continue
                rec = (ev.at, "timer", getattr(t.owner, "rid", -1), getattr(t.owner, "rid", -1), 0, t.tag)
                ring.append(rec)
                if self.record_trace:
                    self.trace.append(rec)
                t.owner.on_timer(t.tag, t.payload)
            elif kind == "drain":
                self._drain(ev.owner)
            else:
                ev.owner(ev.payload)
        if until > self.now:
            self.now = until
        return processed

    def pending_events(self) -> int:
        return len(self._heap)

    # ---------------------------------------------------------------- tracing
    @staticmethod
    def dump_trace(records: Iterable[tuple]) -> str:
        buf = io.StringIO()
        buf.write(",".join(TRACE_COLUMNS) + "\n")
        for t, kind, src, dst, size, tag in records:
            buf.write(f"{t:.9f},{kind},{src},{dst},{size},{tag}\n")
        return buf.getvalue()

    def conservation(self) -> dict[str, int]:
        in_flight = sum(1 for ev in self._heap if ev.kind == "deliver")
        queued = sum(len(j.envelopes) for nic in self.nics for j in nic.queue)
        return {"sent": self.sent, "delivered": self.delivered, "dropped": self.dropped,
                "in_flight": in_flight, "queued": queued}
