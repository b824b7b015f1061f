"""Companions to the leaderless estimator.

Exact backup
    Every agent starts as ``L`` at level 0. Two ``L`` agents at the same level
    i merge into ``L`` at i+1 (receiver) and ``F`` at i+1 (sender); ``F``
    agents spread the highest level. The multiset of ``L`` levels ends up as
    the binary expansion of n. Each agent also tracks the highest level it
    has heard of (``top``) and whether it has seen an ``L`` strictly below
    that level (``surplus``); the readout ``top + surplus`` settles on
    ceil(log2 n) and never exceeds it.

Combined bound
    ``max(ceil(k_est + 3.7), k_ex)``: the estimate shifted up, floored by
    the exact backup.

Leader-driven termination
    Agent 0 is a leader that runs the ordinary transition and additionally
    counts its own interactions in phases of ``cte * clk``. After
    ``k2 * epoch_multiplier * clk`` phases it raises ``terminated``, which
    spreads by epidemic. A change of the leader's clk restarts its count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from numba import njit

from . import _state as st
from ._state import AgentState
from .engine import Population, RunResult, Trace, default_budget, draw_pair, run
from .estimation import (
    TRACE_COLUMNS, EstimationProtocol, ProtocolParams, _probe, advance_kernel,
    converged_kernel, finish_result, pair_kernel,
)
from .rng import Rng

KIND_L = 0
KIND_F = 1
KIND_NAMES = ("L", "F")
DEFAULT_SHIFT = 3.7
DEFAULT_K2 = 4


class ContractViolation(RuntimeError):
    pass


# ---------------------------------------------------------------- exact backup


@dataclass(frozen=True)
class BackupAgentState:
    """``kind`` is "L" or "F"; ``level`` is the subscript i of l_i / f_i."""

    kind: str = "L"
    level: int = 0
    top: int = 0
    surplus: bool = False

    def __post_init__(self):
        if self.kind not in KIND_NAMES:
            raise ValueError(f"kind must be 'L' or 'F', got {self.kind!r}")
        if self.level < 0:
            raise ValueError("level must be non-negative")

    @property
    def k_ex(self) -> int:
        """Current readout; equals ceil(log2 n) once the population is stable."""
        return self.top + int(self.surplus)


@njit(nogil=True, cache=True)
def _backup_pair(kind, level, top, surplus, counts, r, s):
    """One backup interaction in place; returns the change in colliding levels."""
    delta = 0
    if kind[r] == KIND_L and kind[s] == KIND_L and level[r] == level[s]:
        i = level[r]
        counts[i] -= 2
        if counts[i] < 2:
            delta -= 1
        level[r] = i + 1
        kind[s] = KIND_F
        level[s] = i + 1
        counts[i + 1] += 1
        if counts[i + 1] == 2:
            delta += 1
    elif kind[r] == KIND_F and kind[s] == KIND_F:
        if level[r] < level[s]:
            level[r] = level[s]
        elif level[s] < level[r]:
            level[s] = level[r]

    for k in range(2):
        i = r if k == 0 else s
        if level[i] > top[i]:
            top[i] = level[i]
            surplus[i] = 0
    if top[r] < top[s]:
        top[r] = top[s]
        surplus[r] = surplus[s]
    elif top[s] < top[r]:
        top[s] = top[r]
        surplus[s] = surplus[r]
    elif surplus[r] != surplus[s]:
        surplus[r] = 1
        surplus[s] = 1
    # an L strictly below the shared top means n is not a power of two
    if (kind[r] == KIND_L and level[r] < top[r]) or (kind[s] == KIND_L and level[s] < top[s]):
        surplus[r] = 1
        surplus[s] = 1
    return delta


@njit(nogil=True, cache=True)
def _backup_advance(kind, level, top, surplus, counts, collisions, state, count):
    n = kind.shape[0]
    for _ in range(count):
        r, s = draw_pair(state, n)
        collisions[0] += _backup_pair(kind, level, top, surplus, counts, r, s)
    return count


@njit(nogil=True, cache=True)
def _collision_count(counts):
    c = 0
    for i in range(counts.shape[0]):
        if counts[i] >= 2:
            c += 1
    return c


def _pack(states) -> tuple[np.ndarray, ...]:
    n = len(states)
    kind = np.array([KIND_NAMES.index(a.kind) for a in states], dtype=np.int64)
    level = np.array([a.level for a in states], dtype=np.int64)
    top = np.array([a.top for a in states], dtype=np.int64)
    surplus = np.array([int(a.surplus) for a in states], dtype=np.int64)
    counts = np.zeros(max(64, int(level.max(initial=0)) + 2 + int(math.log2(max(n, 2))) + 2), dtype=np.int64)
    for k, lv in zip(kind, level):
        if k == KIND_L:
            counts[lv] += 1
    return kind, level, top, surplus, counts


def backup_interact(x: BackupAgentState, y: BackupAgentState) -> tuple[BackupAgentState, BackupAgentState]:
    """One ordered interaction (x receiver, y sender) of the exact backup."""
    kind, level, top, surplus, counts = _pack([x, y])
    _backup_pair(kind, level, top, surplus, counts, 0, 1)
    return tuple(
        BackupAgentState(KIND_NAMES[int(kind[i])], int(level[i]), int(top[i]), bool(surplus[i]))
        for i in range(2)
    )


def exact_k(n: int) -> int:
    """ceil(log2 n), the value the backup settles on."""
    if n < 1:
        raise ValueError("n must be positive")
    return (n - 1).bit_length()


class BackupPopulation:
    """Array-backed backup population with its own batch transition."""

    def __init__(self, n: int):
        if n < 2:
            raise ValueError(f"need at least two agents, got n={n}")
        self.kind = np.zeros(n, dtype=np.int64)
        self.level = np.zeros(n, dtype=np.int64)
        self.top = np.zeros(n, dtype=np.int64)
        self.surplus = np.zeros(n, dtype=np.int64)
        self.counts = np.zeros(n.bit_length() + 2, dtype=np.int64)
        self.counts[0] = n
        self.collisions = np.array([_collision_count(self.counts)], dtype=np.int64)

    def advance(self, population: Population, rng: Rng, count: int) -> None:
        done = _backup_advance(self.kind, self.level, self.top, self.surplus, self.counts,
                               self.collisions, rng.state, count)
        population.interactions += int(done)

    def l_levels(self) -> list[int]:
        return sorted(int(v) for v in self.level[self.kind == KIND_L])

    def readouts(self) -> np.ndarray:
        return self.top + self.surplus

    def l_mass(self) -> int:
        return int(sum(1 << lv for lv in self.l_levels()))

    def is_stable(self) -> bool:
        """No two L agents share a level and every readout is final."""
        if self.collisions[0] != 0:
            return False
        max_level = int(self.level.max())
        if np.any(self.top != max_level):
            return False
        target = max_level + int(np.count_nonzero(self.kind == KIND_L) > 1)
        return bool(np.all(self.readouts() == target))

    def states(self) -> list[BackupAgentState]:
        return [BackupAgentState(KIND_NAMES[int(k)], int(lv), int(t), bool(sp))
                for k, lv, t, sp in zip(self.kind, self.level, self.top, self.surplus)]


@dataclass
class BackupResult:
    """``merge_free_interactions`` is when all L levels first became distinct;
    ``interactions`` is when every readout had settled as well."""

    n: int
    stabilized: bool
    k_ex: Optional[int]
    parallel_time: float
    interactions: int
    merge_free_interactions: Optional[int]
    l_levels: list


def simulate_backup(n: int, seed: int = 0, max_interactions: Optional[int] = None,
                    snapshot_every: Optional[int] = None) -> BackupResult:
    backup = BackupPopulation(n)
    # the engine only needs the size and counter; agent storage lives in ``backup``
    population = Population(backup.kind, 0)
    merge_free: list[int] = []

    def stop(pop: Population) -> bool:
        if not merge_free and backup.collisions[0] == 0:
            merge_free.append(pop.interactions)
        return backup.is_stable()

    result = run(population, Rng(seed), backup, stop=stop,
                 max_interactions=max_interactions or default_budget(n),
                 snapshot_every=snapshot_every)
    readouts = set(int(v) for v in backup.readouts())
    return BackupResult(
        n=n,
        stabilized=result.converged,
        k_ex=readouts.pop() if result.converged and len(readouts) == 1 else None,
        parallel_time=result.parallel_time,
        interactions=result.interactions,
        merge_free_interactions=merge_free[0] if merge_free else None,
        l_levels=backup.l_levels(),
    )


def combined_upper_bound(k_est: float, k_ex: int, shift: float = DEFAULT_SHIFT) -> int:
    """max(ceil(k_est + shift), k_ex)."""
    if k_ex < 0:
        raise ValueError(f"k_ex must be non-negative, got {k_ex}")
    return max(math.ceil(k_est + shift), int(k_ex))


# ---------------------------------------------------------------- leader-driven termination


@dataclass(frozen=True)
class LeaderAgentState:
    is_leader: bool = False
    phase: int = 0
    terminated: bool = False
    leader_time: int = 0
    agent: AgentState = field(default_factory=AgentState)


def _leader_to_agent(x: LeaderAgentState) -> AgentState:
    return replace(x.agent, is_leader=x.is_leader, phase=x.phase,
                   leader_time=x.leader_time, terminated=x.terminated)


def _agent_to_leader(a: AgentState) -> LeaderAgentState:
    return LeaderAgentState(is_leader=a.is_leader, phase=a.phase, terminated=a.terminated,
                            leader_time=a.leader_time,
                            agent=replace(a, is_leader=False, phase=0, leader_time=0, terminated=False))


def leader_interact(x: LeaderAgentState, y: LeaderAgentState, rng: Rng,
                    params: Optional[ProtocolParams] = None,
                    k2: int = DEFAULT_K2) -> tuple[LeaderAgentState, LeaderAgentState]:
    """Ordinary transition plus the leader's phase count and termination epidemic."""
    if x.is_leader and y.is_leader:
        raise ContractViolation("two leaders met")
    params = params or ProtocolParams()
    rows = np.zeros((2, st.NFIELDS), dtype=np.int64)
    st.state_to_row(_leader_to_agent(x), rows[0])
    st.state_to_row(_leader_to_agent(y), rows[1])
    pair_kernel(rows, 0, 1, params.as_array(k2=k2, leader=True), rng.state, st.new_ranges())
    return _agent_to_leader(st.row_to_state(rows[0])), _agent_to_leader(st.row_to_state(rows[1]))


class LeaderProtocol(EstimationProtocol):
    """Batch transition that stops the chunk at the first termination."""

    def __init__(self, params: ProtocolParams, k2: int = DEFAULT_K2):
        if params.variant != "as":
            raise ValueError("the leader-driven variant runs on the 'as' transition")
        super().__init__(params)
        self.param_array = params.as_array(k2=k2, stop_on_term=True, leader=True)


@dataclass
class LeaderResult:
    n: int
    terminated: bool
    termination_parallel_time: Optional[float]
    converged_at_termination: bool
    first_converged_parallel_time: Optional[float]
    leader_clashes: int
    leaders: int
    run: RunResult


def simulate_leader(n: int, params: Optional[ProtocolParams] = None, seed: int = 0,
                    k2: int = DEFAULT_K2, max_interactions: Optional[int] = None,
                    snapshot_every: Optional[int] = None, record_trace: bool = False) -> LeaderResult:
    """Run until the leader terminates (or the budget is spent).

    Convergence is checked exactly at the interaction that raised
    ``terminated``, and also at every cadence step before it.
    """
    params = params or ProtocolParams()
    agents = st.initial_rows(n)
    agents[0, st.LEADER] = 1
    population = Population(agents)
    protocol = LeaderProtocol(params, k2)
    first_conv: list[float] = []

    def stop(pop: Population) -> bool:
        if not first_conv and converged_kernel(pop.agents, st.VARIANT_AS):
            first_conv.append(pop.parallel_time)
        return bool(pop.agents[:, st.TERM].any())

    budget = max_interactions or default_budget(n) * k2
    result = run(population, Rng(seed), protocol, stop=stop,
                 recorder=Trace(TRACE_COLUMNS) if record_trace else None,
                 max_interactions=budget, snapshot_every=snapshot_every,
                 probe=_probe(st.VARIANT_AS) if record_trace else None)
    finish_result(result, population, protocol.ranges, n)
    terminated = bool(agents[:, st.TERM].any())
    return LeaderResult(
        n=n,
        terminated=terminated,
        termination_parallel_time=population.parallel_time if terminated else None,
        converged_at_termination=terminated and bool(converged_kernel(agents, st.VARIANT_AS)),
        first_converged_parallel_time=first_conv[0] if first_conv else None,
        leader_clashes=int(protocol.ranges[st.R_LEADER_CLASH]),
        leaders=int(agents[:, st.LEADER].sum()),
        run=result,
    )
