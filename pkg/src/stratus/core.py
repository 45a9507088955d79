"""Identifiers, protocol parameters, envelopes and the signature/proof layer.

Everything here is immutable after construction so values can be shared
freely between replicas inside one simulation.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
import struct
from dataclasses import dataclass, field, fields
from functools import lru_cache
from typing import Iterable, Protocol, Sequence

DIGEST_NAME = "sha256"
DIGEST_SIZE = 32
DEFAULT_PAYLOAD = bytes(128)

ReplicaId = int
Digest = bytes


class StratusError(Exception):
    """Base class for protocol errors."""


class EmptyBatch(StratusError, ValueError):
    pass


class QuorumNotReached(StratusError):
    pass


class MixedDigest(StratusError):
    pass


class ConfigError(StratusError, ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str) -> None:
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def digest(data: bytes) -> Digest:
    return hashlib.sha256(data).digest()


@dataclass(frozen=True)
class ProtocolParams:
    n_replicas: int
    f: int
    q: int
    d: int = 1
    delta_fetch: float = 0.4
    tau_sample: float = 0.2
    tau_forward: float = 0.6
    alpha_fetch: float = 0.5
    batch_size_bytes: int = 256_000
    batch_timeout: float = 0.2
    block_size: int = 4096
    native_block_bytes: int = 256_000
    window_size: int = 100
    percentile: int = 95
    view_timeout: float = 1.0
    banlist_reset_period: float = 6.0
    # not in the core contract but needed by the handlers
    min_forward_bytes: int = 1
    share_size_bytes: int = 72
    st_baseline: float | None = None
    st_epsilon: float | None = None
    st_beta: float = 0.0
    st_warmup: int = 20
    # leader rotation order; None rotates over every replica (view mod N)
    leaders: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        n, f, q = self.n_replicas, self.f, self.q
        if f < 0:
            raise ConfigError("f", "must be non-negative")
        if n < 3 * f + 1:
            raise ConfigError("n_replicas", f"need n_replicas >= 3f+1 (n={n}, f={f})")
        if not f + 1 <= q <= 2 * f + 1:
            raise ConfigError("q", f"need f+1 <= q <= 2f+1 (q={q}, f={f})")
        if not 1 <= self.d <= n - 1:
            raise ConfigError("d", f"need 1 <= d <= n_replicas-1 (d={self.d})")
        if self.window_size < 1:
            raise ConfigError("window_size", "must be >= 1")
        if not 1 <= self.percentile <= 100:
            raise ConfigError("percentile", "must be in [1, 100]")
        if not 0.0 <= self.alpha_fetch <= 1.0:
            raise ConfigError("alpha_fetch", "must be a probability")
        for name in ("delta_fetch", "tau_sample", "tau_forward", "batch_timeout",
                     "view_timeout", "banlist_reset_period"):
            if getattr(self, name) <= 0:
                raise ConfigError(name, "must be positive")
        for name in ("batch_size_bytes", "block_size", "share_size_bytes", "native_block_bytes"):
            if getattr(self, name) < 1:
                raise ConfigError(name, "must be >= 1")
        if self.leaders is not None:
            object.__setattr__(self, "leaders", tuple(int(x) for x in self.leaders))
            if not self.leaders or any(not 0 <= x < n for x in self.leaders):
                raise ConfigError("leaders", "must be a non-empty list of replica ids")

    @classmethod
    def for_network(cls, n_replicas: int, one_way_delay: float, bandwidth_bps: float | None = None,
                    f: int | None = None, q: int | None = None, slack: float = 0.01,
                    **overrides) -> "ProtocolParams":
        """Parameters whose timers are derived from the link model.

        ``one_way_delay`` should be an upper bound (base delay plus jitter).
        The RTT bound adds ``slack`` for serialization of small control
        messages. fetch timer = 4 one-way delays, sample timer = 1 RTT bound,
        forward timer = RTT bound + fetch timer + an idle proxy's
        serialization of one broadcast.
        """
        if f is None:
            f = (n_replicas - 1) // 3
        if q is None:
            q = f + 1
        rtt = 2 * one_way_delay + slack
        batch = overrides.get("batch_size_bytes", cls.batch_size_bytes)
        push = 0.0
        if bandwidth_bps:
            push = (n_replicas - 1) * batch * 8 / bandwidth_bps
        delta = overrides.pop("delta_fetch", 4 * one_way_delay)
        tau = overrides.pop("tau_sample", rtt)
        tau_fwd = overrides.pop("tau_forward", rtt + delta + push)
        reset = overrides.pop("banlist_reset_period", 10 * tau_fwd)
        return cls(n_replicas=n_replicas, f=f, q=q, delta_fetch=delta, tau_sample=tau,
                   tau_forward=tau_fwd, banlist_reset_period=reset, **overrides)

    @classmethod
    def field_names(cls) -> list[str]:
        return [fl.name for fl in fields(cls)]


@dataclass(frozen=True, slots=True)
class Transaction:
    id: int | str | bytes
    payload: bytes = DEFAULT_PAYLOAD
    arrival_time: float = 0.0
    origin_replica: ReplicaId = 0

    @property
    def size(self) -> int:
        return len(self.payload)


def _encode_tx_id(tx_id) -> bytes:
    # type tag + length prefix so that distinct id sequences never share an encoding
    if isinstance(tx_id, int):
        return b"i" + struct.pack(">Iq", 8, tx_id)
    if isinstance(tx_id, str):
        raw = tx_id.encode("utf-8")
        return b"s" + struct.pack(">I", len(raw)) + raw
    if isinstance(tx_id, (bytes, bytearray)):
        return b"b" + struct.pack(">I", len(tx_id)) + bytes(tx_id)
    raise TypeError(f"unsupported transaction id type {type(tx_id).__name__}")


def compute_microblock_id(txs: Sequence[Transaction]) -> Digest:
    """Order-sensitive digest over the transaction ids."""
    if not txs:
        raise EmptyBatch("a microblock needs at least one transaction")
    h = hashlib.sha256()
    ids = [tx.id for tx in txs]
    if all(type(i) is int for i in ids):
        fmt = ">" + "cIq" * len(ids)
        args = []
        for i in ids:
            args.extend((b"i", 8, i))
        h.update(struct.pack(fmt, *args))
    else:
        for i in ids:
            h.update(_encode_tx_id(i))
    return h.digest()


@dataclass(frozen=True, slots=True)
class Microblock:
    id: Digest
    txs: tuple[Transaction, ...]
    creator: ReplicaId
    created_at: float = 0.0
    size_bytes: int = 0

    @classmethod
    def seal(cls, txs: Iterable[Transaction], creator: ReplicaId, created_at: float = 0.0) -> "Microblock":
        txs = tuple(txs)
        size = sum(len(t.payload) for t in txs) + 12 * len(txs) + 48
        return cls(compute_microblock_id(txs), txs, creator, created_at, size)

    def is_well_formed(self) -> bool:
        return bool(self.txs) and compute_microblock_id(self.txs) == self.id


@dataclass(frozen=True, slots=True)
class SignatureShare:
    signer: ReplicaId
    over: Digest
    tag: bytes


class SignatureScheme(Protocol):
    def sign(self, signer: ReplicaId, over: Digest) -> SignatureShare: ...

    def verify(self, share: SignatureShare) -> bool: ...


class HmacTestScheme:
    """Deterministic keyed-MAC stand-in for per-replica signing keys."""

    def __init__(self, secret: bytes = b"stratus-test-scheme") -> None:
        self._secret = secret
        self._keys: dict[int, bytes] = {}
        self._verify = lru_cache(maxsize=1 << 18)(self._verify_uncached)

    def key(self, signer: ReplicaId) -> bytes:
        k = self._keys.get(signer)
        if k is None:
            k = hashlib.sha256(self._secret + struct.pack(">q", signer)).digest()
            self._keys[signer] = k
        return k

    def sign(self, signer: ReplicaId, over: Digest) -> SignatureShare:
        tag = hmac.new(self.key(signer), over, hashlib.sha256).digest()
        return SignatureShare(signer, over, tag)

    def verify(self, share: SignatureShare) -> bool:
        return self._verify(share.signer, share.over, share.tag)

    def _verify_uncached(self, signer: ReplicaId, over: Digest, tag: bytes) -> bool:
        if not isinstance(signer, int) or signer < 0:
            return False
        expected = hmac.new(self.key(signer), over, hashlib.sha256).digest()
        return hmac.compare_digest(expected, tag)


DEFAULT_SCHEME = HmacTestScheme()


def sign_share(signer: ReplicaId, over: Digest, scheme: SignatureScheme = DEFAULT_SCHEME) -> SignatureShare:
    return scheme.sign(signer, over)


def verify_share(share: SignatureShare, scheme: SignatureScheme = DEFAULT_SCHEME) -> bool:
    return scheme.verify(share)


@dataclass(frozen=True, slots=True)
class AvailabilityProof:
    over: Digest
    shares: tuple[SignatureShare, ...]
    signers: frozenset[ReplicaId] = field(default=frozenset())

    def size_bytes(self, share_size: int) -> int:
        return DIGEST_SIZE + share_size * len(self.shares)


def aggregate_proof(shares: Iterable[SignatureShare], q: int,
                    scheme: SignatureScheme = DEFAULT_SCHEME) -> AvailabilityProof:
    """Concatenate shares from distinct signers into a proof.

    Shares that fail verification are skipped; duplicate signers collapse to
    the first share seen (shares are ordered by signer for determinism).
    """
    shares = list(shares)
    overs = {s.over for s in shares}
    if len(overs) > 1:
        raise MixedDigest(f"shares cover {len(overs)} different digests")
    by_signer: dict[int, SignatureShare] = {}
    for s in sorted(shares, key=lambda s: s.signer):
        if s.signer not in by_signer and scheme.verify(s):
            by_signer[s.signer] = s
    if len(by_signer) < q or not overs:
        raise QuorumNotReached(f"{len(by_signer)} distinct valid signers, need {q}")
    kept = tuple(by_signer.values())
    return AvailabilityProof(overs.pop(), kept, frozenset(by_signer))


def valid_signers(proof: AvailabilityProof, over: Digest,
                  scheme: SignatureScheme = DEFAULT_SCHEME) -> set[ReplicaId]:
    return {s.signer for s in proof.shares if s.over == over and scheme.verify(s)}


def verify_proof(proof: AvailabilityProof, over: Digest, q: int,
                 scheme: SignatureScheme = DEFAULT_SCHEME) -> bool:
    """True iff the proof covers ``over`` with at least ``q`` distinct valid signers.

    Forged shares are ignored rather than poisoning the whole proof.
    """
    if proof is None or proof.over != over:
        return False
    return len(valid_signers(proof, over, scheme)) >= q


class Kind(enum.Enum):
    PAB_MSG = "PAB-Msg"
    PAB_ACK = "PAB-Ack"
    PAB_PROOF = "PAB-Proof"
    PAB_REQUEST = "PAB-Request"
    PAB_RESPONSE = "PAB-Response"
    LB_QUERY = "LB-Query"
    LB_INFO = "LB-Info"
    LB_FORWARD = "LB-Forward"
    CE_PROPOSE = "CE-Propose"
    CE_VOTE = "CE-Vote"
    CE_NEWVIEW = "CE-NewView"
    # not a protocol message: lets a proxy refuse an undersized forward
    LB_REJECT = "LB-Reject"


class Priority(enum.IntEnum):
    CONSENSUS = 0
    DATA = 1


CONSENSUS_KINDS = frozenset({Kind.CE_PROPOSE, Kind.CE_VOTE, Kind.CE_NEWVIEW, Kind.PAB_PROOF})
HEADER_BYTES = 48


def priority_of(kind: Kind) -> Priority:
    return Priority.CONSENSUS if kind in CONSENSUS_KINDS else Priority.DATA


class MessageEnvelope:
    __slots__ = ("kind", "src", "dst", "body", "size_bytes", "priority", "seq")

    def __init__(self, kind: Kind, src: int, dst: int, body, size_bytes: int, seq: int = 0) -> None:
        if size_bytes <= 0:
            raise ValueError("size_bytes must be positive")
        self.kind = kind
        self.src = src
        self.dst = dst
        self.body = body
        self.size_bytes = size_bytes
        self.priority = priority_of(kind)
        self.seq = seq

    def __repr__(self) -> str:
        return f"<{self.kind.value} {self.src}->{self.dst} {self.size_bytes}B>"
