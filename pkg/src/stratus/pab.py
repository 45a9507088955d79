"""Provably available broadcast: push phase and pull-based recovery.

One ``Pab`` instance lives inside each replica. Handlers run serially from
the simulator's event loop; "wait until" steps are timers plus state.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .core import (
    DIGEST_SIZE,
    HEADER_BYTES,
    AvailabilityProof,
    Digest,
    Kind,
    Microblock,
    QuorumNotReached,
    SignatureShare,
    aggregate_proof,
    valid_signers,
    verify_proof,
)

if TYPE_CHECKING:
    from .replica import Replica


class Phase(enum.Enum):
    PUSHING = "pushing"
    PROVEN = "proven"


@dataclass
class PabSenderState:
    mb_id: Digest
    acks: set[int] = field(default_factory=set)
    shares: dict[int, SignatureShare] = field(default_factory=dict)
    proof: AvailabilityProof | None = None
    phase: Phase = Phase.PUSHING
    started_at: float = 0.0
    origin: int | None = None  # set when broadcasting on behalf of a busy replica


@dataclass
class PabReceiverState:
    mb_id: Digest
    have_content: bool = False
    signers: set[int] = field(default_factory=set)
    requested: set[int] = field(default_factory=set)
    fetch_timer: object | None = None
    rounds: int = 0


class Pab:
    def __init__(self, replica: "Replica") -> None:
        self.r = replica
        self.content: dict[Digest, Microblock] = {}
        self.senders: dict[Digest, PabSenderState] = {}
        self.receivers: dict[Digest, PabReceiverState] = {}
        self._acked: set[tuple[int, Digest]] = set()
        self._first_sender: dict[Digest, int] = {}
        self.misbehavior: dict[int, int] = {}
        self.invalid_proofs = 0
        self.invalid_acks = 0
        self.fetch_started = 0
        self.fetch_rounds = 0
        self.deliveries = 0
        self.proven: set[Digest] = set()

    # ------------------------------------------------------------------ push
    def on_client_microblock(self, mb: Microblock) -> int:
        """A microblock handed over by a client is re-broadcast; one relayed by a
        replica is not (see ``on_pab_msg``)."""
        return self.broadcast(mb)

    def broadcast(self, mb: Microblock, origin: int | None = None, recipients=None) -> int:
        """Start a PAB instance for ``mb``; returns the number of PAB-Msg copies sent."""
        r = self.r
        if mb.id in self.senders:
            return 0
        st = PabSenderState(mb.id, started_at=r.sim.now, origin=origin)
        self.senders[mb.id] = st
        if mb.id not in self.content:
            self._deliver(mb)
        if recipients is None:
            recipients = r.selective_recipients(mb)
        size = mb.size_bytes + HEADER_BYTES
        envs = r.broadcast(Kind.PAB_MSG, mb, size, recipients)
        if r.proofs:
            # the sender's own ack is implicit
            self._add_ack(st, r.scheme.sign(r.rid, mb.id))
        return len(envs)

    def on_pab_msg(self, env) -> None:
        r = self.r
        mb: Microblock = env.body
        key = (env.src, mb.id)
        if key in self._acked:
            return
        if not r.well_formed(mb):
            self.misbehavior[mb.creator] = self.misbehavior.get(mb.creator, 0) + 1
            return
        self._acked.add(key)
        first = self._first_sender.setdefault(mb.id, env.src)
        if first != env.src:
            # same microblock pushed by two senders: a duplicate forward
            self.misbehavior[mb.creator] = self.misbehavior.get(mb.creator, 0) + 1
        if mb.id not in self.content:
            self._deliver(mb)
        if r.proofs and not r.silent:
            share = r.scheme.sign(r.rid, mb.id)
            r.send(env.src, Kind.PAB_ACK, share, r.params.share_size_bytes + HEADER_BYTES)

    def on_pab_ack(self, env) -> None:
        share: SignatureShare = env.body
        st = self.senders.get(share.over)
        if st is None:
            return
        if share.signer != env.src or not self.r.scheme.verify(share):
            self.invalid_acks += 1
            return
        self._add_ack(st, share)

    def _add_ack(self, st: PabSenderState, share: SignatureShare) -> None:
        st.acks.add(share.signer)
        st.shares.setdefault(share.signer, share)
        if st.phase is Phase.PUSHING and len(st.shares) >= self.r.params.q:
            try:
                proof = aggregate_proof(st.shares.values(), self.r.params.q, self.r.scheme)
            except QuorumNotReached:
                return
            st.proof = proof
            st.phase = Phase.PROVEN
            self.r.on_stable(st, self.r.sim.now - st.started_at)
            self.on_ava(st.mb_id, proof)

    # -------------------------------------------------------------- recovery
    def on_ava(self, mb_id: Digest, proof: AvailabilityProof) -> None:
        """PAB-Ava: broadcast the proof and handle it locally."""
        r = self.r
        if not r.silent:
            r.broadcast(Kind.PAB_PROOF, (mb_id, proof), self.proof_size(proof), r.proof_recipients(mb_id))
        self.on_pab_proof(mb_id, proof, local=True)

    def proof_size(self, proof: AvailabilityProof) -> int:
        return HEADER_BYTES + DIGEST_SIZE + proof.size_bytes(self.r.params.share_size_bytes)

    def on_pab_proof(self, mb_id: Digest, proof: AvailabilityProof, local: bool = False) -> bool:
        r = self.r
        if not local and not verify_proof(proof, mb_id, r.params.q, r.scheme):
            self.invalid_proofs += 1
            return False
        self.record_signers(mb_id, proof)
        self.proven.add(mb_id)
        if mb_id not in self.content:
            rs = self.receivers[mb_id]
            if rs.fetch_timer is None:
                self.fetch(mb_id)
        r.on_proven(mb_id, proof)
        return True

    def record_signers(self, mb_id: Digest, proof: AvailabilityProof) -> PabReceiverState:
        rs = self.receivers.get(mb_id)
        if rs is None:
            rs = PabReceiverState(mb_id, have_content=mb_id in self.content)
            self.receivers[mb_id] = rs
        rs.signers |= valid_signers(proof, mb_id, self.r.scheme)
        return rs

    def fetch(self, mb_id: Digest) -> int:
        """One recovery round: request from a random subset of unrequested signers.

        Returns the number of requests sent this round.
        """
        r = self.r
        rs = self.receivers.get(mb_id)
        if rs is None or rs.have_content or mb_id in self.content:
            return 0
        if rs.rounds == 0:
            self.fetch_started += 1
        rs.rounds += 1
        self.fetch_rounds += 1
        if rs.fetch_timer is not None:
            rs.fetch_timer.cancel()
        rs.fetch_timer = r.set_timer(r.params.delta_fetch, "fetch", mb_id)
        candidates = sorted(rs.signers - rs.requested - {r.rid})
        if not candidates:
            rs.requested.clear()
            candidates = sorted(rs.signers - {r.rid})
        alpha = r.params.alpha_fetch
        sent = 0
        for peer in candidates:
            if r.rng.random() < alpha:
                rs.requested.add(peer)
                r.send(peer, Kind.PAB_REQUEST, mb_id, HEADER_BYTES + DIGEST_SIZE)
                sent += 1
        return sent

    def on_fetch_timeout(self, mb_id: Digest) -> None:
        rs = self.receivers.get(mb_id)
        if rs is None:
            return
        rs.fetch_timer = None
        if not rs.have_content:
            self.fetch(mb_id)

    def on_pab_request(self, env) -> None:
        r = self.r
        mb = self.content.get(env.body)
        if mb is None or not r.answers_requests:
            return
        r.send(env.src, Kind.PAB_RESPONSE, mb, mb.size_bytes + HEADER_BYTES)

    def on_pab_response(self, env) -> None:
        mb: Microblock = env.body
        if mb.id in self.content:
            return
        if not self.r.well_formed(mb):
            self.misbehavior[env.src] = self.misbehavior.get(env.src, 0) + 1
            return
        self._deliver(mb)

    # -------------------------------------------------------------- delivery
    def _deliver(self, mb: Microblock) -> None:
        self.content[mb.id] = mb
        self.deliveries += 1
        rs = self.receivers.get(mb.id)
        if rs is not None:
            rs.have_content = True
            if rs.fetch_timer is not None:
                rs.fetch_timer.cancel()
                rs.fetch_timer = None
        self.r.on_deliver(mb)

    def has_proof(self, mb_id: Digest) -> bool:
        return mb_id in self.proven

    def has(self, mb_id: Digest) -> bool:
        return mb_id in self.content
