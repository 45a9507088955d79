"""Shared mempool with provably available broadcast and distributed load
balancing, a chained BFT engine, and a deterministic network simulator."""

from .analytics import (
    AnalyticParams,
    optimal_eta,
    tmax_lbft,
    tmax_pbft_batched,
    tmax_smp,
    tmax_smp_optimal,
)
from .consensus import ChainedHotStuff, QuorumCert, SafetyViolation, quorum_size
from .core import (
    AvailabilityProof,
    ConfigError,
    Microblock,
    ProtocolParams,
    SignatureShare,
    StratusError,
    Transaction,
    aggregate_proof,
    compute_microblock_id,
    verify_proof,
)
from .harness import MempoolMode, MetricsReport, Run, Scenario, load_scenarios, run_scenario
from .simnet import AdversarySpec, Behavior, LinkModel, SimulationBudgetExceeded, Simulator
from .smp import Mode, Proposal
from .workload import Assignment, WorkloadSpec

__version__ = "0.1.0"

__all__ = [
    "AdversarySpec", "AnalyticParams", "Assignment", "AvailabilityProof", "Behavior",
    "ChainedHotStuff", "ConfigError", "LinkModel", "MempoolMode", "MetricsReport", "Microblock",
    "Mode", "Proposal", "ProtocolParams", "QuorumCert", "Run", "SafetyViolation", "Scenario",
    "SignatureShare", "SimulationBudgetExceeded", "Simulator", "StratusError", "Transaction",
    "WorkloadSpec", "aggregate_proof", "compute_microblock_id", "load_scenarios", "optimal_eta",
    "quorum_size", "run_scenario", "tmax_lbft", "tmax_pbft_batched", "tmax_smp",
    "tmax_smp_optimal", "verify_proof",
]
