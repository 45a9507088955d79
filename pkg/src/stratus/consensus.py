"""A small chained, leader-rotating BFT engine with a timeout pacemaker.

Every block carries the QC of its parent (the leader always extends its
highest QC), so the commit rule needs consecutive views: a block commits once
it and its next two descendants are certified in views v, v+1, v+2. Voting
follows the two-chain lock: vote for a block only if its view is newer than the
last vote and its QC is at least as new as the locked view.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import TYPE_CHECKING

from .core import (
    DIGEST_SIZE,
    HEADER_BYTES,
    Digest,
    Kind,
    SignatureShare,
    StratusError,
    digest,
)
from .smp import Mode, Proposal, Verdict

if TYPE_CHECKING:
    from .replica import Replica


class SafetyViolation(StratusError):
    """Two conflicting blocks were committed; the run must abort."""


def quorum_size(n: int, f: int) -> int:
    # any two quorums intersect in at least f+1 replicas; equals 2f+1 when n = 3f+1
    return (n + f + 2) // 2


def vote_digest(view: int, block_digest: Digest) -> Digest:
    return digest(b"vote" + struct.pack(">q", view) + block_digest)


@dataclass(frozen=True)
class QuorumCert:
    view: int
    block_digest: Digest
    shares: tuple[SignatureShare, ...] = ()

    def size_bytes(self, share_size: int) -> int:
        return 8 + DIGEST_SIZE + share_size * len(self.shares)


GENESIS = Proposal(0, (), bytes(DIGEST_SIZE), -1)
GENESIS_QC = QuorumCert(0, GENESIS.digest)


def verify_qc(qc: QuorumCert, quorum: int, scheme) -> bool:
    if qc.view == 0:
        return qc.block_digest == GENESIS.digest
    over = vote_digest(qc.view, qc.block_digest)
    signers = {s.signer for s in qc.shares if s.over == over and scheme.verify(s)}
    return len(signers) >= quorum


def leader_of(view: int, n: int, leaders: tuple[int, ...] | None = None) -> int:
    if leaders:
        return leaders[view % len(leaders)]
    return view % n


class ChainedHotStuff:
    def __init__(self, replica: "Replica") -> None:
        self.r = replica
        p = replica.params
        self.n = p.n_replicas
        self.quorum = quorum_size(p.n_replicas, p.f)
        self.view = 1
        self.high_qc = GENESIS_QC
        self.locked_view = 0
        self.last_voted = 0
        self.blocks: dict[Digest, Proposal] = {GENESIS.digest: GENESIS}
        self.committed: list[Digest] = []
        self.committed_set: set[Digest] = {GENESIS.digest}
        self.last_committed = GENESIS
        self.uncommitted: dict[Digest, Proposal] = {}
        self.abandoned: set[Digest] = set()
        self._orphans: dict[Digest, list[Proposal]] = {}
        self._awaiting_full: dict[Digest, Proposal] = {}
        self._filling: dict[Digest, Proposal] = {}
        self._votes: dict[tuple[int, Digest], dict[int, SignatureShare]] = {}
        self._newviews: dict[int, dict[int, QuorumCert]] = {}
        self._latest_nv: dict[int, int] = {}
        self._proposed: set[int] = set()
        self.timer = None
        self.timeouts: list[int] = []
        self.invalid_messages = 0

    # --------------------------------------------------------------- helpers
    def leader(self, view: int) -> int:
        return leader_of(view, self.n, self.r.params.leaders)

    def start(self) -> None:
        self._arm()
        if self.leader(self.view) == self.r.rid:
            self._propose(self.view)

    def _arm(self) -> None:
        if self.timer is not None:
            self.timer.cancel()
        self.timer = self.r.set_timer(self.r.params.view_timeout, "pacemaker", self.view)

    def _enter(self, view: int) -> None:
        if view > self.view:
            self.view = view
            self._arm()

    def _update_high_qc(self, qc: QuorumCert) -> None:
        if qc.view > self.high_qc.view and qc.block_digest in self.blocks:
            self.high_qc = qc

    def ancestor_ids(self, p: Proposal) -> set[Digest]:
        """Microblock ids in the uncommitted ancestors of ``p``."""
        out: set[Digest] = set()
        cur = self.blocks.get(p.parent)
        while cur is not None and cur.digest not in self.committed_set:
            out.update(cur.ids)
            cur = self.blocks.get(cur.parent)
        return out

    # -------------------------------------------------------------- proposing
    def _propose(self, view: int) -> None:
        if view in self._proposed or view != self.view:
            return
        self._proposed.add(view)
        qc = self.high_qc
        p = self.r.build_proposal(view, qc.block_digest, qc)
        if p is None:
            return
        size = p.size_bytes(self.r.params.share_size_bytes)
        self.r.broadcast(Kind.CE_PROPOSE, p, size)
        self.on_propose(p, self.r.rid)

    def on_propose(self, p: Proposal, src: int) -> None:
        if src != self.leader(p.view) or p.proposer != src or p.justify is None:
            self.invalid_messages += 1
            return
        if p.digest in self.blocks or p.digest in self._filling:
            return
        if p.justify.block_digest != p.parent or p.justify.view >= p.view:
            self.invalid_messages += 1
            return
        if not verify_qc(p.justify, self.quorum, self.r.scheme):
            self.invalid_messages += 1
            return
        if p.parent not in self.blocks:
            self._orphans.setdefault(p.parent, []).append(p)
            return
        self._admit(p)

    def _admit(self, p: Proposal) -> None:
        if self.r.mode is Mode.BEST_EFFORT:
            # without availability proofs a block is only usable once its
            # content is complete, so it (and every descendant) waits for that
            if p.digest not in self._filling:
                self._filling[p.digest] = p
                self.r.mempool.fill_proposal(p)
            return
        self._accept(p)
        for child in self._orphans.pop(p.digest, ()):
            self._admit(child)

    def _accept(self, p: Proposal) -> None:
        self.blocks[p.digest] = p
        self.uncommitted[p.digest] = p
        self.r.mempool.register_block(p)
        self._update_high_qc(p.justify)
        self._process_qc(p.justify)
        if p.view < self.view or p.view <= self.last_voted:
            return
        if p.justify.view < self.locked_view:
            return
        self._enter(p.view)
        verdict = self.r.mempool.on_proposal(p, self.ancestor_ids(p))
        if verdict is Verdict.ENTER_COMMIT:
            self._vote(p)
        elif verdict is Verdict.AWAIT_FULL:
            self._awaiting_full[p.digest] = p
        else:
            self.r.on_view_change_verdict(p)
            self.pacemaker_timeout(self.view)

    def on_full(self, block_digest: Digest) -> None:
        p = self._filling.pop(block_digest, None)
        if p is not None:
            self._accept(p)
            for child in self._orphans.pop(p.digest, ()):
                self._admit(child)
            return
        p = self._awaiting_full.pop(block_digest, None)
        if p is None:
            return
        if p.view == self.view and p.view > self.last_voted:
            self._vote(p)

    # ----------------------------------------------------------------- voting
    def _vote(self, p: Proposal) -> None:
        r = self.r
        self.last_voted = p.view
        self._awaiting_full.clear()
        if r.votes:
            share = r.scheme.sign(r.rid, vote_digest(p.view, p.digest))
            nxt = self.leader(p.view + 1)
            body = (p.view, p.digest, share)
            if nxt == r.rid:
                self.on_vote(body, r.rid)
            else:
                r.send(nxt, Kind.CE_VOTE, body, HEADER_BYTES + 8 + DIGEST_SIZE + r.params.share_size_bytes)
        self._enter(p.view + 1)

    def on_vote(self, body, src: int) -> None:
        view, block_digest, share = body
        if self.leader(view + 1) != self.r.rid or share.signer != src:
            self.invalid_messages += 1
            return
        if share.over != vote_digest(view, block_digest) or not self.r.scheme.verify(share):
            self.invalid_messages += 1
            return
        if view + 1 in self._proposed:
            return
        bucket = self._votes.setdefault((view, block_digest), {})
        bucket.setdefault(src, share)
        if len(bucket) >= self.quorum and block_digest in self.blocks:
            shares = tuple(bucket[k] for k in sorted(bucket))
            qc = QuorumCert(view, block_digest, shares)
            del self._votes[(view, block_digest)]
            self._update_high_qc(qc)
            self._process_qc(qc)
            if self.view <= view + 1:
                self._enter(view + 1)
                self._propose(view + 1)

    # ------------------------------------------------------------- commitment
    def _process_qc(self, qc: QuorumCert) -> None:
        b2 = self.blocks.get(qc.block_digest)
        if b2 is None or b2.justify is None:
            return
        if b2.justify.view > self.locked_view:
            self.locked_view = b2.justify.view
        b1 = self.blocks.get(b2.parent)
        if b1 is None or b1.justify is None:
            return
        b0 = self.blocks.get(b1.parent)
        if b0 is None:
            return
        if b2.view == b1.view + 1 and b1.view == b0.view + 1 and qc.view == b2.view:
            self._commit(b0)

    def _commit(self, b: Proposal) -> None:
        if b.digest in self.committed_set:
            return
        chain = []
        cur = b
        while cur.digest not in self.committed_set:
            chain.append(cur)
            cur = self.blocks[cur.parent]
        if cur.digest != self.last_committed.digest:
            raise SafetyViolation(
                f"replica {self.r.rid}: block at view {b.view} does not extend the committed "
                f"block at view {self.last_committed.view}")
        for blk in reversed(chain):
            self.committed.append(blk.digest)
            self.committed_set.add(blk.digest)
            self.uncommitted.pop(blk.digest, None)
            self.last_committed = blk
            self.r.on_commit(blk)
        self._abandon_stale(b.view)

    def _abandon_stale(self, upto: int) -> None:
        stale = [p for p in self.uncommitted.values() if p.view <= upto]
        for p in stale:
            del self.uncommitted[p.digest]
            self.abandoned.add(p.digest)
            self.r.mempool.on_abandon(p)

    # -------------------------------------------------------------- pacemaker
    def pacemaker_timeout(self, view: int) -> None:
        if view != self.view:
            return
        self.timeouts.append(view)
        self.r.on_pacemaker_fired(view)
        self._send_newview(view + 1)

    def _send_newview(self, view: int) -> None:
        r = self.r
        self.view = view
        self._arm()
        self._awaiting_full.clear()
        qc = self.high_qc
        if r.votes:
            size = HEADER_BYTES + 8 + qc.size_bytes(r.params.share_size_bytes)
            r.broadcast(Kind.CE_NEWVIEW, (view, qc), size)
        self.on_newview((view, qc), r.rid)

    def on_newview(self, body, src: int) -> None:
        view, qc = body
        if qc.view > self.high_qc.view:
            if not verify_qc(qc, self.quorum, self.r.scheme):
                self.invalid_messages += 1
                return
            self._update_high_qc(qc)
            self._process_qc(qc)
        if view > self._latest_nv.get(src, 0):
            self._latest_nv[src] = view
        self._newviews.setdefault(view, {})[src] = qc
        if view > self.view:
            # join the highest view that f+1 replicas have moved to
            f = self.r.params.f
            ranked = sorted(self._latest_nv.values(), reverse=True)
            if len(ranked) > f and ranked[f] > self.view:
                self._send_newview(ranked[f])
                return
        if view == self.view and self.leader(view) == self.r.rid:
            if len(self._newviews[view]) >= self.quorum:
                self._propose(view)
