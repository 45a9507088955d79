"""Scenario runner: builds a simulation, drives the workload, collects metrics
and checks the safety, inclusion and stability invariants."""

from __future__ import annotations

import csv
import dataclasses
import enum
import io
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .consensus import SafetyViolation
from .core import DIGEST_NAME, ConfigError, Kind, Microblock, ProtocolParams, Transaction
from .kernels import bucket_sum
from .replica import Hooks, Replica
from .simnet import AdversarySpec, Behavior, LinkModel, Simulator
from .smp import Mode, Proposal
from .workload import Assignment, WorkloadSpec, generate

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)


class MempoolMode(enum.Enum):
    NATIVE = "native"
    BEST_EFFORT = "best-effort"
    STRATUS = "stratus"
    STRATUS_NO_DLB = "stratus-nodlb"

    @property
    def smp_mode(self) -> Mode:
        return {MempoolMode.NATIVE: Mode.NATIVE, MempoolMode.BEST_EFFORT: Mode.BEST_EFFORT}.get(self, Mode.STRATUS)


CATEGORIES = ("proposals", "microblocks", "votes", "acks", "proofs", "control")
_CATEGORY_OF = {
    Kind.CE_PROPOSE: "proposals",
    Kind.PAB_MSG: "microblocks",
    Kind.PAB_RESPONSE: "microblocks",
    Kind.LB_FORWARD: "microblocks",
    Kind.CE_VOTE: "votes",
    Kind.CE_NEWVIEW: "votes",
    Kind.PAB_ACK: "acks",
    Kind.PAB_PROOF: "proofs",
    Kind.PAB_REQUEST: "control",
    Kind.LB_QUERY: "control",
    Kind.LB_INFO: "control",
    Kind.LB_REJECT: "control",
}


def category_of(kind: Kind) -> str:
    return _CATEGORY_OF[kind]


@dataclass(frozen=True)
class Fluctuation:
    start: float
    duration: float
    low: float
    high: float
    packet_bytes: int = 0


@dataclass(frozen=True)
class Scenario:
    name: str
    params: ProtocolParams
    link: LinkModel
    workload: WorkloadSpec
    mode: MempoolMode = MempoolMode.STRATUS
    horizon: float = 20.0
    seed: int = 0
    adversary: AdversarySpec | None = None
    fluctuations: tuple[Fluctuation, ...] = ()
    bandwidth_overrides: tuple[tuple[int, float], ...] = ()
    token_fraction: float = 0.8
    # throughput is averaged over [measure_from, measure_to]; None = workload span
    measure_from: float | None = None
    measure_to: float | None = None
    max_events: int = 20_000_000

    def __post_init__(self) -> None:
        if self.horizon <= 0:
            raise ConfigError("scenario.horizon", "must be positive")
        if self.params.n_replicas > 256:
            raise ConfigError("params.n_replicas", "desk-scale simulator supports at most 256 replicas")
        if self.adversary is not None:
            self.adversary.validate(self.params.n_replicas, self.params.f)

    def replace(self, **kw) -> "Scenario":
        return dataclasses.replace(self, **kw)


@dataclass
class MetricsReport:
    scenario: str
    mode: str
    seed: int
    n: int
    throughput_tx_per_s: float
    latency_mean_ms: float
    latency_p50_ms: float
    latency_p95_ms: float
    view_change_count: int
    missing_fetch_count: int
    commit_count: int
    committed_txs: int
    offered_txs: int
    received_txs: int
    bytes_by_category: dict[str, int]
    bytes_total: int
    safety_ok: bool
    inclusion_ok: bool
    stability_ok: bool
    uncommitted_txs: int
    undelivered_ids: int
    buckets: list[float] = field(default_factory=list)
    bucket_start: float = 0.0
    forwards: int = 0
    events: int = 0
    digest: str = DIGEST_NAME
    error: str = ""

    CSV_COLUMNS = ("scenario", "mode", "seed", "n", "throughput_tx_per_s", "latency_mean_ms",
                   "latency_p50_ms", "latency_p95_ms", "view_change_count", "missing_fetch_count",
                   "commit_count", "committed_txs", "offered_txs", "bytes_proposals",
                   "bytes_microblocks", "bytes_votes", "bytes_acks", "bytes_proofs", "bytes_control",
                   "bytes_total", "safety_ok", "inclusion_ok", "stability_ok", "forwards", "error")

    def row(self) -> list[str]:
        b = self.bytes_by_category
        return [self.scenario, self.mode, str(self.seed), str(self.n),
                f"{self.throughput_tx_per_s:.3f}", f"{self.latency_mean_ms:.3f}",
                f"{self.latency_p50_ms:.3f}", f"{self.latency_p95_ms:.3f}",
                str(self.view_change_count), str(self.missing_fetch_count), str(self.commit_count),
                str(self.committed_txs), str(self.offered_txs)] + [str(b.get(c, 0)) for c in CATEGORIES] + [
                str(self.bytes_total), str(int(self.safety_ok)), str(int(self.inclusion_ok)),
                str(int(self.stability_ok)), str(self.forwards), self.error]

    @property
    def ok(self) -> bool:
        return self.safety_ok and not self.error


class _Recorder(Hooks):
    """Omniscient measurement: the observer's commit times plus tx receipts at
    correct replicas."""

    def __init__(self, observer: int, correct: set[int]) -> None:
        self.observer = observer
        self.correct = correct
        self.received: dict[Any, float] = {}
        self.registry: dict[bytes, Microblock] = {}
        self.commit_times: list[float] = []
        self.commit_sizes: list[int] = []
        self.latencies: list[float] = []
        self.committed_tx_ids: set = set()
        self.committed_blocks = 0
        self.pacemaker_views: set[int] = set()

    def tx_received(self, rid: int, tx: Transaction, now: float) -> None:
        if rid in self.correct:
            self.received[tx.id] = now

    def committed(self, rid: int, p: Proposal, now: float) -> None:
        if rid != self.observer:
            return
        self.committed_blocks += 1
        txs: list[Transaction] = list(p.txs)
        for mb_id in p.ids:
            mb = self.registry.get(mb_id)
            if mb is not None:
                txs.extend(mb.txs)
        fresh = 0
        for tx in txs:
            if tx.id in self.committed_tx_ids:
                continue
            self.committed_tx_ids.add(tx.id)
            self.latencies.append(now - tx.arrival_time)
            fresh += 1
        if fresh:
            self.commit_times.append(now)
            self.commit_sizes.append(fresh)

    def pacemaker_fired(self, rid: int, view: int, now: float) -> None:
        self.pacemaker_views.add(view)


class Run:
    """A built (not yet executed) scenario; exposes replicas for white-box tests."""

    def __init__(self, sc: Scenario, record_trace: bool = False) -> None:
        self.sc = sc
        p = sc.params
        n = p.n_replicas
        mode = sc.mode
        self.sim = Simulator(n, sc.link, sc.seed, prioritize=mode is not MempoolMode.NATIVE
                             and mode is not MempoolMode.BEST_EFFORT,
                             token_fraction=sc.token_fraction,
                             bandwidth_overrides=dict(sc.bandwidth_overrides),
                             max_events=sc.max_events, record_trace=record_trace)
        for fl in sc.fluctuations:
            self.sim.inject_fluctuation(fl.start, fl.duration, (fl.low, fl.high), fl.packet_bytes)
        adv = sc.adversary
        byz = set(adv.replica_set) if adv else set()
        self.correct = sorted(set(range(n)) - byz)
        if not self.correct:
            raise ConfigError("adversary.replicas", "no correct replica left")
        self.observer = self.correct[0]
        self.rec = _Recorder(self.observer, set(self.correct))
        wf: dict = {}
        self.replicas: list[Replica] = []
        for i in range(n):
            beh = adv.behavior if adv and i in byz else None
            r = Replica(i, self.sim, p, mode.smp_mode, dlb=mode is MempoolMode.STRATUS, behavior=beh,
                        hooks=self.rec, wf_cache=wf, targets=adv.targets if adv and i in byz else None)
            self.replicas.append(r)
        registry = self.rec.registry
        for r in self.replicas:
            orig = r.on_sealed

            def sealed(mb, _orig=orig):
                registry[mb.id] = mb
                _orig(mb)

            r.on_sealed = sealed
        self.offered = 0

    def submit(self, replica: int, tx: Transaction) -> None:
        self.offered += 1
        self.replicas[replica].submit(tx)

    def execute(self) -> MetricsReport:
        sc = self.sc
        for r in self.replicas:
            r.start()
        generate(sc.workload, self.sim, self.submit, sc.params.n_replicas)
        error = ""
        safety_ok = True
        try:
            self.sim.run(sc.horizon)
        except SafetyViolation as exc:
            safety_ok = False
            error = f"safety violation: {exc}"
        if safety_ok and not self.prefix_consistent():
            safety_ok = False
            error = "safety violation: commit logs diverge"
        return self.report(safety_ok, error)

    # -------------------------------------------------------------- checks
    def prefix_consistent(self) -> bool:
        logs = [self.replicas[i].engine.committed for i in self.correct]
        execs = [self.replicas[i].mempool.exec_log for i in self.correct]
        return _pairwise_prefix(logs) and _pairwise_prefix(execs)

    def uncommitted(self) -> list:
        done = self.rec.committed_tx_ids
        return [t for t in self.rec.received if t not in done]

    def undelivered(self) -> int:
        if self.sc.mode is MempoolMode.NATIVE:
            return 0
        obs = self.replicas[self.observer].engine
        ids = set()
        for d in obs.committed:
            ids.update(obs.blocks[d].ids)
        missing = 0
        for i in self.correct:
            content = self.replicas[i].pab.content
            missing += sum(1 for x in ids if x not in content)
        return missing

    # ------------------------------------------------------------- metrics
    def report(self, safety_ok: bool, error: str) -> MetricsReport:
        sc = self.sc
        rec = self.rec
        wl = sc.workload
        t0 = sc.measure_from if sc.measure_from is not None else wl.start
        t1 = sc.measure_to if sc.measure_to is not None else min(sc.horizon, wl.start + wl.duration)
        times = np.asarray(rec.commit_times, dtype=np.float64)
        sizes = np.asarray(rec.commit_sizes, dtype=np.float64)
        window = max(t1 - t0, 1e-9)
        in_win = (times >= t0) & (times < t1)
        throughput = float(sizes[in_win].sum()) / window
        nb = int(math.ceil(sc.horizon))
        buckets = bucket_sum(times, sizes, 0.0, 1.0, nb).tolist()
        lat = np.asarray(rec.latencies, dtype=np.float64) * 1000.0
        if lat.size:
            mean, p50, p95 = float(lat.mean()), float(np.percentile(lat, 50)), float(np.percentile(lat, 95))
        else:
            mean = p50 = p95 = float("nan")
        by_cat = {c: 0 for c in CATEGORIES}
        total = 0
        for r in range(sc.params.n_replicas):
            for k, v in self.sim.bytes_out[r].items():
                by_cat[category_of(k)] += v
                total += v
        unc = len(self.uncommitted())
        und = self.undelivered()
        return MetricsReport(
            scenario=sc.name, mode=sc.mode.value, seed=sc.seed, n=sc.params.n_replicas,
            throughput_tx_per_s=throughput, latency_mean_ms=mean, latency_p50_ms=p50,
            latency_p95_ms=p95, view_change_count=len(rec.pacemaker_views),
            missing_fetch_count=sum(self.replicas[i].pab.fetch_started for i in self.correct),
            commit_count=rec.committed_blocks, committed_txs=len(rec.committed_tx_ids),
            offered_txs=self.offered, received_txs=len(rec.received), bytes_by_category=by_cat,
            bytes_total=total, safety_ok=safety_ok, inclusion_ok=unc == 0, stability_ok=und == 0,
            uncommitted_txs=unc, undelivered_ids=und, buckets=buckets,
            forwards=sum(r.lb.forwards for r in self.replicas), events=self.sim.events_processed,
            error=error)


def _pairwise_prefix(logs: Sequence[Sequence]) -> bool:
    longest = max(logs, key=len, default=[])
    for lg in logs:
        if list(lg) != list(longest[: len(lg)]):
            return False
    return True


def run_scenario(sc: Scenario) -> MetricsReport:
    return Run(sc).execute()


# ------------------------------------------------------------------- output
def reports_csv(reports: Iterable[MetricsReport], extra: Sequence[tuple[str, Sequence[str]]] = ()) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([name for name, _ in extra] + list(MetricsReport.CSV_COLUMNS))
    for i, rep in enumerate(reports):
        w.writerow([vals[i] for _, vals in extra] + rep.row())
    return buf.getvalue()


def buckets_csv(reports: Iterable[MetricsReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario", "mode", "seed", "t", "committed_txs"])
    for rep in reports:
        for i, v in enumerate(rep.buckets):
            w.writerow([rep.scenario, rep.mode, rep.seed, f"{rep.bucket_start + i:.0f}", f"{v:.0f}"])
    return buf.getvalue()


# -------------------------------------------------------------------- config
_SECTIONS = {"scenario", "params", "link", "workload", "adversary", "fluctuation", "sweep"}


def _pop(d: dict, key: str, default, typ, where: str):
    if key not in d:
        return default
    val = d.pop(key)
    try:
        if typ is bool:
            if not isinstance(val, bool):
                raise TypeError
            return val
        if typ is float and isinstance(val, bool):
            raise TypeError
        return typ(val)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key}", f"expected {typ.__name__}, got {val!r}") from None


def _no_leftovers(d: dict, where: str) -> None:
    if d:
        key = sorted(d)[0]
        raise ConfigError(f"{where}.{key}", "unknown key")


def parse_assignment(value: str) -> Assignment:
    v = value.strip().lower()
    if v == "uniform":
        return Assignment()
    if v == "zipf1":
        return Assignment("zipf", 1.01, 1.0)
    if v == "zipf10":
        return Assignment("zipf", 1.01, 10.0)
    raise ConfigError("workload.assignment", f"expected uniform, zipf1, zipf10 or use zipf_s/zipf_v, got {value!r}")


def link_idle_push_time(params: ProtocolParams, link: LinkModel, token_fraction: float) -> float:
    """Stable time of one microblock on an idle link: the broadcast's
    serialization at the token rate plus one round trip for the acks."""
    mb_bytes = params.batch_size_bytes * 1.1
    return (params.n_replicas - 1) * mb_bytes * 8 / (link.bandwidth_bits_per_s * token_fraction) + 2 * link.base_delay


def scenarios_from_dict(doc: dict, seed: int | None = None) -> list[Scenario]:
    """Build one Scenario per listed mode from a parsed config document."""
    doc = {k: dict(v) if isinstance(v, dict) else v for k, v in doc.items()}
    for key in doc:
        if key not in _SECTIONS:
            raise ConfigError(key, "unknown section")
    s = doc.get("scenario", {})
    name = _pop(s, "name", "scenario", str, "scenario")
    modes_raw = s.pop("modes", None)
    if modes_raw is None:
        modes_raw = [_pop(s, "mode", "stratus", str, "scenario")]
    modes = []
    for m in modes_raw:
        try:
            modes.append(MempoolMode(m))
        except ValueError:
            raise ConfigError("scenario.modes", f"unknown mode {m!r}") from None
    horizon = _pop(s, "horizon", 20.0, float, "scenario")
    sd = _pop(s, "seed", 0, int, "scenario")
    measure_from = _pop(s, "measure_from", None, float, "scenario")
    measure_to = _pop(s, "measure_to", None, float, "scenario")
    token_fraction = _pop(s, "token_fraction", 0.8, float, "scenario")
    max_events = _pop(s, "max_events", 20_000_000, int, "scenario")
    _no_leftovers(s, "scenario")
    if seed is not None:
        sd = seed

    lk = doc.get("link", {})
    link_kw = {}
    for key in ("base_delay", "jitter", "bandwidth_bits_per_s", "loss"):
        if key in lk:
            link_kw[key] = _pop(lk, key, None, float, "link")
    overrides = lk.pop("bandwidth_overrides", {})
    _no_leftovers(lk, "link")
    link = LinkModel(**link_kw)
    try:
        bw_over = tuple(sorted((int(k), float(v)) for k, v in overrides.items()))
    except (TypeError, ValueError, AttributeError):
        raise ConfigError("link.bandwidth_overrides", "expected a table of replica -> bits/s") from None

    pr = doc.get("params", {})
    if "n_replicas" not in pr:
        raise ConfigError("params.n_replicas", "required")
    n = _pop(pr, "n_replicas", 4, int, "params")
    f = _pop(pr, "f", None, int, "params")
    q_raw = pr.pop("q", None)
    f_eff = f if f is not None else (n - 1) // 3
    if q_raw in ("f+1", "2f+1"):
        q = f_eff + 1 if q_raw == "f+1" else 2 * f_eff + 1
    else:
        q = _pop({"q": q_raw}, "q", None, int, "params") if q_raw is not None else None
    baseline = pr.pop("st_baseline", None)
    leaders_raw = pr.pop("leaders", None)
    known = set(ProtocolParams.field_names())
    kw = {}
    for key in sorted(pr):
        if key not in known:
            raise ConfigError(f"params.{key}", "unknown key")
        default = getattr(ProtocolParams, key, None)
        typ = int if isinstance(default, int) and not isinstance(default, bool) else float
        kw[key] = _pop(pr, key, None, typ, "params")
    params = ProtocolParams.for_network(n, link.delay_bound, link.bandwidth_bits_per_s, f=f, q=q, **kw)
    if baseline == "link":
        params = dataclasses.replace(params, st_baseline=link_idle_push_time(params, link, token_fraction),
                                     st_epsilon=params.st_epsilon if params.st_epsilon is not None else 0.0)
    elif baseline is not None:
        try:
            params = dataclasses.replace(params, st_baseline=float(baseline))
        except (TypeError, ValueError):
            raise ConfigError("params.st_baseline", f"expected seconds or \"link\", got {baseline!r}") from None

    wl = doc.get("workload", {})
    rate = _pop(wl, "rate", None, float, "workload")
    if rate is None:
        raise ConfigError("workload.rate", "required")
    duration = _pop(wl, "duration", horizon, float, "workload")
    payload = _pop(wl, "payload_bytes", 128, int, "workload")
    assignment = parse_assignment(_pop(wl, "assignment", "uniform", str, "workload"))
    if "zipf_s" in wl or "zipf_v" in wl:
        assignment = Assignment("zipf", _pop(wl, "zipf_s", 1.01, float, "workload"),
                                _pop(wl, "zipf_v", 1.0, float, "workload"))
    poisson = _pop(wl, "poisson", False, bool, "workload")
    start = _pop(wl, "start", 0.0, float, "workload")
    _no_leftovers(wl, "workload")
    workload = WorkloadSpec(rate, duration, payload, assignment, sd, poisson, start)

    adversary = None
    ad = doc.get("adversary")
    if ad:
        reps = ad.pop("replicas", None)
        count = _pop(ad, "count", None, int, "adversary")
        if reps is None:
            count = count or 0
            reps = list(range(n - count, n))
        beh_raw = _pop(ad, "behavior", "silent", str, "adversary")
        try:
            beh = Behavior(beh_raw)
        except ValueError:
            raise ConfigError("adversary.behavior", f"unknown behavior {beh_raw!r}") from None
        targets = ad.pop("targets", None)
        _no_leftovers(ad, "adversary")
        if reps:
            adversary = AdversarySpec(frozenset(int(r) for r in reps), beh,
                                      tuple(int(t) for t in targets) if targets is not None else None)

    if leaders_raw is not None:
        # "correct" rotates leadership over the non-adversarial replicas only
        if leaders_raw == "correct":
            byz = adversary.replica_set if adversary else frozenset()
            leaders_raw = [i for i in range(n) if i not in byz]
        try:
            params = dataclasses.replace(params, leaders=tuple(int(x) for x in leaders_raw))
        except (TypeError, ValueError):
            raise ConfigError("params.leaders", f"expected a list of replica ids or \"correct\", got {leaders_raw!r}") from None

    flucts = []
    for i, fl in enumerate(doc.get("fluctuation", []) or []):
        fl = dict(fl)
        where = f"fluctuation[{i}]"
        item = Fluctuation(_pop(fl, "start", 0.0, float, where), _pop(fl, "duration", 1.0, float, where),
                           _pop(fl, "low", 0.1, float, where), _pop(fl, "high", 0.3, float, where),
                           _pop(fl, "packet_bytes", 0, int, where))
        _no_leftovers(fl, where)
        flucts.append(item)

    out = []
    for m in modes:
        out.append(Scenario(name=name, params=params, link=link, workload=workload, mode=m, horizon=horizon,
                            seed=sd, adversary=adversary, fluctuations=tuple(flucts),
                            bandwidth_overrides=bw_over, token_fraction=token_fraction,
                            measure_from=measure_from, measure_to=measure_to, max_events=max_events))
    return out


def load_config(path: str | Path) -> dict:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"not valid TOML: {exc}") from None


def load_scenarios(path: str | Path, seed: int | None = None) -> list[Scenario]:
    return scenarios_from_dict(load_config(path), seed)


# --------------------------------------------------------------------- sweep
SWEEP_AXES = ("n", "batch_size", "rate", "zipf", "d", "byzantine", "q", "seed")


def apply_axis(doc: dict, axis: str, value: str) -> dict:
    """Return a copy of a config document with one axis overridden."""
    if axis not in SWEEP_AXES:
        raise ConfigError("axis", f"unknown axis {axis!r}; expected one of {', '.join(SWEEP_AXES)}")
    doc = {k: (dict(v) if isinstance(v, dict) else v) for k, v in doc.items()}
    doc.setdefault("params", {})
    doc.setdefault("workload", {})
    try:
        if axis == "n":
            n = int(value)
            doc["params"]["n_replicas"] = n
            doc["params"].pop("f", None)
            if not isinstance(doc["params"].get("q"), str):
                doc["params"].pop("q", None)
        elif axis == "batch_size":
            doc["params"]["batch_size_bytes"] = _parse_size(value)
        elif axis == "rate":
            doc["workload"]["rate"] = float(value)
        elif axis == "zipf":
            doc["workload"].pop("zipf_s", None)
            doc["workload"].pop("zipf_v", None)
            doc["workload"]["assignment"] = value
        elif axis == "d":
            doc["params"]["d"] = int(value)
        elif axis == "q":
            doc["params"]["q"] = int(value)
        elif axis == "seed":
            doc.setdefault("scenario", {})
            doc["scenario"] = dict(doc["scenario"], seed=int(value))
        elif axis == "byzantine":
            ad = dict(doc.get("adversary", {}))
            ad.pop("replicas", None)
            ad["count"] = int(value)
            doc["adversary"] = ad
    except ValueError:
        raise ConfigError("values", f"bad value {value!r} for axis {axis}") from None
    return doc


def _parse_size(value: str) -> int:
    v = value.strip().upper()
    mult = 1
    if v.endswith("K"):
        mult, v = 1000, v[:-1]
    elif v.endswith("M"):
        mult, v = 1000_000, v[:-1]
    return int(float(v) * mult)


def sweep(doc: dict, axis: str, values: Sequence[str], seed: int | None = None) -> tuple[list[MetricsReport], list[str]]:
    """Run every mode of the document for every axis value; failures become
    rows with an ``error`` field instead of aborting the sweep."""
    reports: list[MetricsReport] = []
    labels: list[str] = []
    for value in values:
        try:
            scs = scenarios_from_dict(apply_axis(doc, axis, value), seed)
        except ConfigError as exc:
            rep = _error_report(doc, str(exc))
            reports.append(rep)
            labels.append(value)
            continue
        for sc in scs:
            try:
                rep = run_scenario(sc)
            except Exception as exc:  # a failing row must not abort the sweep
                log.exception("sweep row %s=%s failed", axis, value)
                rep = _error_report(doc, f"{type(exc).__name__}: {exc}", sc)
            reports.append(rep)
            labels.append(value)
    return reports, labels


def _error_report(doc: dict, msg: str, sc: Scenario | None = None) -> MetricsReport:
    nan = float("nan")
    return MetricsReport(
        scenario=sc.name if sc else str(doc.get("scenario", {}).get("name", "scenario")),
        mode=sc.mode.value if sc else "", seed=sc.seed if sc else 0, n=sc.params.n_replicas if sc else 0,
        throughput_tx_per_s=nan, latency_mean_ms=nan, latency_p50_ms=nan, latency_p95_ms=nan,
        view_change_count=0, missing_fetch_count=0, commit_count=0, committed_txs=0, offered_txs=0,
        received_txs=0, bytes_by_category={}, bytes_total=0, safety_ok=True, inclusion_ok=False,
        stability_ok=False, uncommitted_txs=0, undelivered_ids=0, error=msg.replace("\n", " "))


def saturation_throughput(sc: Scenario, rates: Sequence[float], min_ratio: float = 0.9) -> tuple[float, list[MetricsReport]]:
    """Largest committed throughput among the offered rates the system keeps
    up with (committed at least ``min_ratio`` of what was offered in the
    measurement window)."""
    best = 0.0
    reps = []
    for rate in rates:
        wl = dataclasses.replace(sc.workload, rate_tx_per_s=rate)
        rep = run_scenario(sc.replace(workload=wl))
        reps.append(rep)
        if rep.throughput_tx_per_s >= min_ratio * rate:
            best = max(best, rep.throughput_tx_per_s)
    return best, reps
