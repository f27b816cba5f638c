"""Desk-scale blockchain whose proof-of-work is optimization.

Block content maps deterministically onto a QUBO/QCO coupling matrix;
miners submit spin or phase configurations found by a gain-dissipative
oscillator-network emulator (or classical heuristics), and verifiers
accept blocks whose exactly-recomputed objective beats a deterministic,
budgeted simulated-annealing baseline.
"""

from .baselines import SaParams, baseline_threshold, sa_qco, sa_qubo
from .gdsim import GdParams, SteadyStateReport, solve_qco, solve_qubo
from .kernels import BACKEND
from .ledger import AppendResult, BlockStore, ChainParams
from .netsim import ScenarioConfig, attacker_race, race_curve, run_scenario
from .pow import (
    Block,
    BlockHeader,
    DifficultyTarget,
    MiningError,
    Solution,
    Transaction,
    VerifyError,
    adjust_difficulty,
    build_coupling_matrix,
    genesis_block,
    merkle_root,
    mine,
    verify,
)
from .problem import (
    CouplingMatrix,
    InstanceSpec,
    brute_force_qubo,
    evaluate_qco,
    evaluate_qubo,
    grid_search_qco,
    ising_energy,
    random_instance,
    read_instance,
    write_instance,
    xy_energy,
)

__version__ = "0.1.0"

__all__ = [
    "AppendResult",
    "BACKEND",
    "Block",
    "BlockHeader",
    "BlockStore",
    "ChainParams",
    "CouplingMatrix",
    "DifficultyTarget",
    "GdParams",
    "InstanceSpec",
    "MiningError",
    "SaParams",
    "ScenarioConfig",
    "Solution",
    "SteadyStateReport",
    "Transaction",
    "VerifyError",
    "adjust_difficulty",
    "attacker_race",
    "baseline_threshold",
    "brute_force_qubo",
    "build_coupling_matrix",
    "evaluate_qco",
    "evaluate_qubo",
    "genesis_block",
    "grid_search_qco",
    "ising_energy",
    "merkle_root",
    "mine",
    "race_curve",
    "random_instance",
    "read_instance",
    "run_scenario",
    "sa_qco",
    "sa_qubo",
    "solve_qco",
    "solve_qubo",
    "verify",
    "write_instance",
    "xy_energy",
    "__version__",
]
