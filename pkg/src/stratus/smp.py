"""The shared mempool: intake and batching, proposal bookkeeping, fill and GC.

Three dissemination modes share this class:

* ``stratus``: microblocks go through PAB; proposals carry (id, proof) pairs
  and a replica may vote before content arrives.
* ``best-effort``: microblocks are broadcast without acks; proposals carry
  bare ids and a replica votes only once the block is full, fetching missing
  content from the proposer.
* ``native``: no microblocks; the leader proposes the raw transactions it
  buffered itself.
"""

from __future__ import annotations

import enum
import struct
from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable

from .core import (
    DIGEST_SIZE,
    HEADER_BYTES,
    AvailabilityProof,
    Digest,
    Kind,
    Microblock,
    Transaction,
    digest,
    verify_proof,
)

if TYPE_CHECKING:
    from .consensus import QuorumCert
    from .replica import Replica


class Mode(enum.Enum):
    NATIVE = "native"
    BEST_EFFORT = "best-effort"
    STRATUS = "stratus"


class Verdict(enum.Enum):
    ENTER_COMMIT = "enter-commit"
    VIEW_CHANGE = "view-change"
    AWAIT_FULL = "await-full"


@dataclass(frozen=True, eq=False)
class Proposal:
    view: int
    payload: tuple[tuple[Digest, AvailabilityProof | None], ...]
    parent: Digest
    proposer: int
    justify: "QuorumCert | None" = None
    txs: tuple[Transaction, ...] = ()
    digest: Digest = b""

    def __post_init__(self) -> None:
        h = [b"blk", struct.pack(">qq", self.view, self.proposer), self.parent]
        if self.justify is not None:
            h.append(struct.pack(">q", self.justify.view) + self.justify.block_digest)
        h.extend(i for i, _ in self.payload)
        if self.txs:
            from .core import compute_microblock_id

            h.append(compute_microblock_id(self.txs))
        object.__setattr__(self, "digest", digest(b"".join(h)))

    @property
    def ids(self) -> tuple[Digest, ...]:
        return tuple(i for i, _ in self.payload)

    def size_bytes(self, share_size: int) -> int:
        size = 2 * HEADER_BYTES + DIGEST_SIZE
        if self.justify is not None:
            size += share_size * len(self.justify.shares)
        for _, proof in self.payload:
            size += DIGEST_SIZE
            if proof is not None:
                size += proof.size_bytes(share_size)
        size += sum(len(t.payload) + 12 for t in self.txs)
        return size


@dataclass
class Block:
    proposal: Proposal
    microblocks: tuple[Microblock, ...]
    full: bool


@dataclass
class _Fill:
    proposal: Proposal
    missing: set[Digest]
    timer: object | None = None


@dataclass
class MempoolState:
    mb_map: dict[Digest, Microblock] = field(default_factory=dict)
    p_map: dict[Digest, AvailabilityProof] = field(default_factory=dict)
    # insertion-ordered dict used as a FIFO with O(1) removal
    ava_queue: dict[Digest, None] = field(default_factory=dict)
    pending_txs: list[Transaction] = field(default_factory=list)
    batch_timer: object | None = None


class Mempool:
    def __init__(self, replica: "Replica", mode: Mode) -> None:
        self.r = replica
        self.mode = mode
        self.state = MempoolState()
        self.pending_bytes = 0
        self.seen_tx: set = set()
        self.duplicate_txs = 0
        self.committed_ids: set[Digest] = set()
        self.inflight: dict[Digest, int] = {}
        self.native_inflight: dict[Digest, tuple[Transaction, ...]] = {}
        self.fills: dict[Digest, _Fill] = {}
        self._waiting: dict[Digest, list[Digest]] = {}
        self.full_blocks: set[Digest] = set()
        self.exec_queue: deque[Proposal] = deque()
        self.exec_log: list[Digest] = []
        self.executed_txs = 0
        self.sealed = 0

    # ---------------------------------------------------------------- intake
    def receive_tx(self, tx: Transaction) -> Microblock | None:
        if tx.id in self.seen_tx:
            self.duplicate_txs += 1
            return None
        self.seen_tx.add(tx.id)
        st = self.state
        st.pending_txs.append(tx)
        self.pending_bytes += len(tx.payload)
        if self.mode is Mode.NATIVE:
            return None
        if self.pending_bytes >= self.r.params.batch_size_bytes:
            return self.seal()
        if st.batch_timer is None:
            st.batch_timer = self.r.set_timer(self.r.params.batch_timeout, "batch", None)
        return None

    def on_batch_timeout(self) -> Microblock | None:
        self.state.batch_timer = None
        if self.state.pending_txs:
            return self.seal()
        return None

    def seal(self) -> Microblock:
        st = self.state
        txs, st.pending_txs = st.pending_txs, []
        self.pending_bytes = 0
        if st.batch_timer is not None:
            st.batch_timer.cancel()
            st.batch_timer = None
        mb = Microblock.seal(txs, self.r.rid, self.r.sim.now)
        self.sealed += 1
        self.r.on_sealed(mb)
        return mb

    # ------------------------------------------------------------- PAB hooks
    def on_deliver(self, mb: Microblock) -> None:
        if mb.id in self.committed_ids:
            # replay of a garbage-collected microblock
            if self.exec_queue:
                self._try_execute()
            return
        self.state.mb_map[mb.id] = mb
        if self.mode is Mode.BEST_EFFORT and mb.id not in self.inflight:
            self.state.ava_queue.setdefault(mb.id, None)
        for fd in self._waiting.pop(mb.id, ()):
            fill = self.fills.get(fd)
            if fill is None:
                continue
            fill.missing.discard(mb.id)
            if not fill.missing:
                self._complete_fill(fill)
        if self.exec_queue:
            self._try_execute()

    def on_proven(self, mb_id: Digest, proof: AvailabilityProof) -> bool:
        """Record a verified proof; returns True when the id was newly queued."""
        st = self.state
        if mb_id in self.committed_ids or mb_id in st.p_map:
            return False
        st.p_map[mb_id] = proof
        if mb_id in self.inflight:
            return False
        st.ava_queue[mb_id] = None
        return True

    # -------------------------------------------------------------- proposing
    def make_proposal(self, view: int, parent: Digest, justify=None) -> Proposal:
        st = self.state
        limit = self.r.params.block_size
        if self.mode is Mode.NATIVE:
            budget = self.r.params.native_block_bytes
            take = 0
            used = 0
            for tx in st.pending_txs:
                if used + len(tx.payload) > budget and take:
                    break
                used += len(tx.payload)
                take += 1
            txs = tuple(st.pending_txs[:take])
            del st.pending_txs[:take]
            self.pending_bytes -= used
            p = Proposal(view, (), parent, self.r.rid, justify, txs)
            if txs:
                self.native_inflight[p.digest] = txs
            return p
        payload = []
        while len(payload) < limit and st.ava_queue:
            mb_id = next(iter(st.ava_queue))
            del st.ava_queue[mb_id]
            if mb_id in self.committed_ids or mb_id in self.inflight:
                continue
            if self.mode is Mode.STRATUS:
                proof = st.p_map.get(mb_id)
                if proof is None:
                    continue
                payload.append((mb_id, proof))
            else:
                payload.append((mb_id, None))
        return Proposal(view, tuple(payload), parent, self.r.rid, justify)

    def register_block(self, p: Proposal) -> None:
        for mb_id in p.ids:
            self.inflight[mb_id] = self.inflight.get(mb_id, 0) + 1

    def on_proposal(self, p: Proposal, ancestor_ids: set[Digest]) -> Verdict:
        r = self.r
        ids = p.ids
        if len(ids) > r.params.block_size or len(set(ids)) != len(ids):
            return Verdict.VIEW_CHANGE
        for mb_id in ids:
            if mb_id in self.committed_ids or mb_id in ancestor_ids:
                return Verdict.VIEW_CHANGE
        if self.mode is Mode.STRATUS:
            for mb_id, proof in p.payload:
                if proof is None or not verify_proof(proof, mb_id, r.params.q, r.scheme):
                    return Verdict.VIEW_CHANGE
            self.fill_proposal(p)
            return Verdict.ENTER_COMMIT
        if self.mode is Mode.BEST_EFFORT:
            if self.fill_proposal(p):
                return Verdict.ENTER_COMMIT
            return Verdict.AWAIT_FULL
        self.full_blocks.add(p.digest)
        return Verdict.ENTER_COMMIT

    def fill_proposal(self, p: Proposal) -> bool:
        """Start (or finish) filling ``p``; True when the block is already full."""
        if p.digest in self.fills or p.digest in self.full_blocks:
            return p.digest in self.full_blocks
        pab = self.r.pab
        missing = {i for i in p.ids if i not in pab.content}
        fill = _Fill(p, missing)
        self.fills[p.digest] = fill
        if not missing:
            self._complete_fill(fill)
            return True
        for mb_id in sorted(missing):
            self._waiting.setdefault(mb_id, []).append(p.digest)
        if self.mode is Mode.STRATUS:
            for mb_id, proof in p.payload:
                if mb_id in missing:
                    rs = pab.record_signers(mb_id, proof)
                    if rs.fetch_timer is None:
                        pab.fetch(mb_id)
        else:
            self.r.pab.fetch_started += len(missing)
            self._request_from_proposer(fill)
        return False

    def _request_from_proposer(self, fill: _Fill) -> None:
        r = self.r
        for mb_id in sorted(fill.missing):
            r.send(fill.proposal.proposer, Kind.PAB_REQUEST, mb_id, HEADER_BYTES + DIGEST_SIZE)
            r.pab.fetch_rounds += 1
        fill.timer = r.set_timer(r.params.delta_fetch, "leader-fetch", fill.proposal.digest)

    def on_leader_fetch_timeout(self, block_digest: Digest) -> None:
        fill = self.fills.get(block_digest)
        if fill is not None and fill.missing:
            self._request_from_proposer(fill)

    def _complete_fill(self, fill: _Fill) -> None:
        p = fill.proposal
        if fill.timer is not None:
            fill.timer.cancel()
            fill.timer = None
        del self.fills[p.digest]
        self.full_blocks.add(p.digest)
        content = self.r.pab.content
        for mb_id in p.ids:
            self.state.ava_queue.pop(mb_id, None)
        block = Block(p, tuple(content[i] for i in p.ids), True)
        self.r.on_full(block)

    # ----------------------------------------------------------------- commit
    def on_commit(self, p: Proposal) -> None:
        st = self.state
        if p.ids and p.digest not in self.full_blocks and p.digest not in self.fills:
            # committed without this replica having processed the proposal
            self.fill_proposal(p)
        for mb_id in p.ids:
            self.committed_ids.add(mb_id)
            st.mb_map.pop(mb_id, None)
            st.p_map.pop(mb_id, None)
            st.ava_queue.pop(mb_id, None)
            self.inflight.pop(mb_id, None)
        self.native_inflight.pop(p.digest, None)
        self.exec_queue.append(p)
        self._try_execute()

    def on_abandon(self, p: Proposal) -> None:
        """``p`` can never commit: give its ids back to the queue."""
        st = self.state
        for mb_id in p.ids:
            c = self.inflight.get(mb_id, 0) - 1
            if c > 0:
                self.inflight[mb_id] = c
                continue
            self.inflight.pop(mb_id, None)
            if mb_id in self.committed_ids:
                continue
            if self.mode is Mode.STRATUS and mb_id in st.p_map:
                st.ava_queue.setdefault(mb_id, None)
            elif self.mode is Mode.BEST_EFFORT and mb_id in self.r.pab.content:
                st.ava_queue.setdefault(mb_id, None)
        self.fills.pop(p.digest, None)
        txs = self.native_inflight.pop(p.digest, None)
        if txs:
            st.pending_txs[:0] = list(txs)
            self.pending_bytes += sum(len(t.payload) for t in txs)

    def _try_execute(self) -> None:
        content = self.r.pab.content
        while self.exec_queue:
            p = self.exec_queue[0]
            if any(i not in content for i in p.ids):
                return
            self.exec_queue.popleft()
            for mb_id in p.ids:
                self.exec_log.append(mb_id)
                self.executed_txs += len(content[mb_id].txs)
            if p.txs:
                self.exec_log.append(p.digest)
                self.executed_txs += len(p.txs)
            self.full_blocks.discard(p.digest)

    def queue_ids(self) -> list[Digest]:
        return list(self.state.ava_queue)

    def pending(self) -> Iterable[Transaction]:
        return self.state.pending_txs
