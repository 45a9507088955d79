"""One simulated replica: message dispatch, timers and Byzantine behaviours."""

from __future__ import annotations

import random
from typing import Any

from .consensus import GENESIS_QC, ChainedHotStuff, QuorumCert
from .core import (
    DEFAULT_SCHEME,
    AvailabilityProof,
    Digest,
    Kind,
    Microblock,
    ProtocolParams,
    Transaction,
    digest,
)
from .dlb import LoadBalancer
from .pab import Pab
from .simnet import Behavior, Simulator
from .smp import Block, Mempool, Mode, Proposal


class Hooks:
    """Measurement callbacks; the harness overrides what it needs."""

    def tx_received(self, rid: int, tx: Transaction, now: float) -> None: ...

    def committed(self, rid: int, p: Proposal, now: float) -> None: ...

    def pacemaker_fired(self, rid: int, view: int, now: float) -> None: ...

    def stable(self, rid: int, st: float, now: float) -> None: ...


class Replica:
    def __init__(self, rid: int, sim: Simulator, params: ProtocolParams, mode: Mode = Mode.STRATUS, *,
                 dlb: bool = True, behavior: Behavior | None = None, scheme=DEFAULT_SCHEME,
                 hooks: Hooks | None = None, wf_cache: dict | None = None,
                 targets: tuple[int, ...] | None = None) -> None:
        self.rid = rid
        self.sim = sim
        self.params = params
        self.mode = mode
        self.scheme = scheme
        self.behavior = behavior
        self.targets = targets
        self.hooks = hooks or Hooks()
        self.rng = random.Random(f"replica:{sim.seed}:{rid}")
        self.proofs = mode is Mode.STRATUS
        self.silent = behavior is Behavior.SILENT
        self.votes = not self.silent
        self.answers_requests = behavior not in (Behavior.SILENT, Behavior.SELECTIVE_BROADCAST)
        self.acts_as_proxy = behavior not in (Behavior.SILENT, Behavior.CENSORING_PROXY, Behavior.FAKE_LOW_LOAD)
        self._wf = wf_cache if wf_cache is not None else {}
        self.pab = Pab(self)
        self.mempool = Mempool(self, mode)
        self.lb = LoadBalancer(self, enabled=dlb and mode is Mode.STRATUS)
        self.engine = ChainedHotStuff(self)
        self.view_change_verdicts = 0
        sim.register(rid, self)

    @property
    def correct(self) -> bool:
        return self.behavior is None

    def start(self) -> None:
        if self.silent:
            return
        self.lb.start()
        self.engine.start()

    # ------------------------------------------------------------ plumbing
    def send(self, dst: int, kind: Kind, body, size: int):
        if self.silent:
            return None
        return self.sim.send(self.rid, dst, kind, body, size)

    def broadcast(self, kind: Kind, body, size: int, dsts=None):
        if self.silent:
            return []
        return self.sim.broadcast(self.rid, kind, body, size, dsts)

    def set_timer(self, delay: float, tag: str, payload=None):
        return self.sim.set_timer(self, delay, tag, payload)

    def on_timer(self, tag: str, payload: Any) -> None:
        if tag == "pacemaker":
            self.engine.pacemaker_timeout(payload)
        elif tag == "batch":
            self.mempool.on_batch_timeout()
        elif tag == "fetch":
            self.pab.on_fetch_timeout(payload)
        elif tag == "leader-fetch":
            self.mempool.on_leader_fetch_timeout(payload)
        elif tag == "sample":
            self.lb.on_sample_timeout(payload)
        elif tag == "forward":
            self.lb.on_forward_timeout(payload)
        elif tag == "reset":
            self.lb.on_reset_timeout()
        else:
            raise ValueError(f"unknown timer tag {tag!r}")

    def receive(self, env) -> None:
        if self.silent:
            return
        k = env.kind
        if k is Kind.PAB_MSG:
            self.pab.on_pab_msg(env)
        elif k is Kind.PAB_ACK:
            self.pab.on_pab_ack(env)
        elif k is Kind.PAB_PROOF:
            mb_id, proof = env.body
            self.pab.on_pab_proof(mb_id, proof)
        elif k is Kind.PAB_REQUEST:
            self.pab.on_pab_request(env)
        elif k is Kind.PAB_RESPONSE:
            self.pab.on_pab_response(env)
        elif k is Kind.CE_PROPOSE:
            self.engine.on_propose(env.body, env.src)
        elif k is Kind.CE_VOTE:
            self.engine.on_vote(env.body, env.src)
        elif k is Kind.CE_NEWVIEW:
            self.engine.on_newview(env.body, env.src)
        elif k is Kind.LB_QUERY:
            self.lb.on_lb_query(env)
        elif k is Kind.LB_INFO:
            self.lb.on_lb_info(env)
        elif k is Kind.LB_FORWARD:
            self.lb.on_lb_forward(env)
        elif k is Kind.LB_REJECT:
            self.lb.on_lb_reject(env)

    def well_formed(self, mb: Microblock) -> bool:
        # the cache is shared by every replica of one simulation; keyed by object
        # identity so a tampered copy with the same id is still re-hashed
        hit = self._wf.get(mb.id)
        if hit is mb:
            return True
        ok = mb.is_well_formed()
        if ok:
            self._wf[mb.id] = mb
        return ok

    # --------------------------------------------------------- client side
    def submit(self, tx: Transaction) -> None:
        if self.silent:
            return
        self.hooks.tx_received(self.rid, tx, self.sim.now)
        self.mempool.receive_tx(tx)

    # ------------------------------------------------------------ callbacks
    def on_sealed(self, mb: Microblock) -> None:
        if self.mode is Mode.STRATUS:
            self.lb.on_new_microblock(mb)
        else:
            self.pab.broadcast(mb)

    def on_stable(self, st, duration: float) -> None:
        self.lb.record_stable_time(duration)
        self.hooks.stable(self.rid, duration, self.sim.now)

    def on_proven(self, mb_id: Digest, proof: AvailabilityProof) -> None:
        self.mempool.on_proven(mb_id, proof)
        self.lb.on_proof(mb_id)

    def on_deliver(self, mb: Microblock) -> None:
        self.mempool.on_deliver(mb)

    def on_full(self, block: Block) -> None:
        self.engine.on_full(block.proposal.digest)

    def on_commit(self, p: Proposal) -> None:
        self.mempool.on_commit(p)
        self.hooks.committed(self.rid, p, self.sim.now)

    def on_pacemaker_fired(self, view: int) -> None:
        if self.correct:
            self.hooks.pacemaker_fired(self.rid, view, self.sim.now)

    def on_view_change_verdict(self, p: Proposal) -> None:
        self.view_change_verdicts += 1

    # ------------------------------------------------- behaviour-dependent
    def upcoming_leader(self) -> int:
        return self.engine.leader(self.engine.view + 1)

    def selective_recipients(self, mb: Microblock):
        """Recipients of a PAB push; None means everyone."""
        if self.behavior is not Behavior.SELECTIVE_BROADCAST:
            return None
        if self.targets is not None:
            return list(self.targets)
        n = self.params.n_replicas
        lead = self.upcoming_leader()
        if self.mode is not Mode.STRATUS or lead == self.rid:
            chosen = [lead] if lead != self.rid else [(self.rid + 1) % n]
            if self.mode is Mode.STRATUS:
                extra = self.params.q - 1 - len(chosen)
                rest = [(self.rid + k) % n for k in range(1, n)]
                chosen += [x for x in rest if x not in chosen][:extra]
            return chosen
        # just enough recipients for the ack quorum: self + leader + (q-2) others
        chosen = [lead]
        for k in range(1, n):
            if len(chosen) >= self.params.q - 1:
                break
            x = (lead + k) % n
            if x != self.rid and x not in chosen:
                chosen.append(x)
        return chosen

    def proof_recipients(self, mb_id: Digest):
        return None

    def advertised_load(self) -> float | None:
        if self.behavior is Behavior.FAKE_LOW_LOAD:
            return 0.0
        return self.lb.get_load_status()

    def extra_forward_target(self, mb: Microblock, proxy: int) -> int | None:
        if self.behavior is not Behavior.DUPLICATE_FORWARD:
            return None
        n = self.params.n_replicas
        for k in range(1, n):
            x = (proxy + k) % n
            if x != self.rid:
                return x
        return None

    def build_proposal(self, view: int, parent: Digest, justify: QuorumCert) -> Proposal | None:
        b = self.behavior
        if b is Behavior.SILENT:
            return None
        if b is Behavior.FORKING_LEADER:
            older = self._older_qc(justify)
            if older is not None:
                return self.mempool.make_proposal(view, older.block_digest, older)
        p = self.mempool.make_proposal(view, parent, justify)
        if b is Behavior.PROOFLESS_LEADER:
            fake = digest(b"unproven" + view.to_bytes(8, "big") + self.rid.to_bytes(4, "big"))
            share = self.scheme.sign(self.rid, fake)
            bogus = AvailabilityProof(fake, (share,), frozenset({self.rid}))
            payload = p.payload + ((fake, bogus if self.proofs else None),)
            # ids already popped from the queue are handed back when the block is abandoned
            p = Proposal(view, payload, parent, self.rid, justify, p.txs)
        return p

    def _older_qc(self, justify: QuorumCert) -> QuorumCert | None:
        blocks = self.engine.blocks
        b = blocks.get(justify.block_digest)
        if b is None or b.justify is None:
            return None
        return b.justify if b.justify.view < justify.view else GENESIS_QC
