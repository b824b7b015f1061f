"""Leaderless estimation of log n in population protocols.

Simulator, analytic concentration bounds, Monte Carlo checks and a command
line for running experiments.
"""

from .engine import InteractionRecord, Population, RunResult, Trace, pick_pair, run
from .estimation import (
    ProtocolParams, compute_output, init_agent, init_population, interact,
    is_converged, measure_run, partition_roles, simulate,
)
from .primitives import (
    GeometricSampler, PhaseClockState, epidemic_max, phase_tick, restart, sample_geometric,
)
from .rng import Rng
from ._state import AgentState
from .variants import (
    BackupAgentState, LeaderAgentState, backup_interact, combined_upper_bound,
    leader_interact, simulate_backup, simulate_leader,
)

__all__ = [
    "AgentState", "BackupAgentState", "GeometricSampler", "InteractionRecord",
    "LeaderAgentState", "PhaseClockState", "Population", "ProtocolParams", "Rng",
    "RunResult", "Trace", "backup_interact", "combined_upper_bound", "compute_output",
    "epidemic_max", "init_agent", "init_population", "interact", "is_converged",
    "leader_interact", "measure_run", "partition_roles", "phase_tick", "pick_pair",
    "restart", "run", "sample_geometric", "simulate", "simulate_backup", "simulate_leader",
]

__version__ = "0.1.0"
