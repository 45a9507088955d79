import pytest

from stratus.core import ProtocolParams, Transaction, Microblock
from stratus.replica import Replica
from stratus.simnet import LinkModel, Simulator
from stratus.smp import Mode


class Cluster:
    """Replicas wired to one simulator without starting consensus."""

    def __init__(self, n=4, f=None, q=None, seed=0, mode=Mode.STRATUS, link=None, **kw):
        f = (n - 1) // 3 if f is None else f
        q = f + 1 if q is None else q
        self.params = ProtocolParams(n, f, q, **kw)
        self.sim = Simulator(n, link or LinkModel(base_delay=0.01, bandwidth_bits_per_s=1e9), seed)
        self.replicas = [Replica(i, self.sim, self.params, mode, dlb=False) for i in range(n)]

    def __getitem__(self, i):
        return self.replicas[i]

    def run(self, until=5.0):
        self.sim.run(until)


def make_mb(ids=(1, 2, 3), creator=0):
    return Microblock.seal([Transaction(i) for i in ids], creator)


@pytest.fixture
def cluster():
    return Cluster
