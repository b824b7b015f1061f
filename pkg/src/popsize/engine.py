"""Sequential random-pair scheduler shared by all protocols.

A run is a total order of interactions. Each one picks an ordered pair
(receiver, sender) uniformly among the n(n-1) ordered pairs of distinct agents
and hands both states to a transition. Parallel time is interactions / n.

Two kinds of transition plug into :func:`run`:

* a plain Python function ``step(receiver, sender, record, rng) -> (receiver, sender)``
  acting on agent objects stored in a list, one interaction at a time;
* a batch protocol object with ``advance(population, rng, count)`` that
  performs ``count`` scheduler draws itself (the compiled protocol kernels).

Either way :func:`run` owns the stopping rule, the budget and the trace.
"""

from __future__ import annotations

import math
from array import array
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np
from numba import njit

from .rng import Rng, uniform_below


class InvalidPopulation(ValueError):
    pass


@dataclass(frozen=True)
class InteractionRecord:
    receiver: int
    sender: int
    number: int = 0

    def __post_init__(self):
        if self.receiver == self.sender:
            raise InvalidPopulation("an agent cannot interact with itself")


@njit(nogil=True, cache=True)
def draw_pair(state, n):
    """Ordered pair of distinct agents, uniform over all n(n-1) choices."""
    r = uniform_below(state, n * (n - 1))
    receiver = r // (n - 1)
    sender = r % (n - 1)
    if sender >= receiver:
        sender += 1
    return receiver, sender


def pick_pair(rng: Rng, n: int, number: int = 0) -> InteractionRecord:
    if n < 2:
        raise InvalidPopulation(f"need at least two agents, got n={n}")
    receiver, sender = draw_pair(rng.state, n)
    return InteractionRecord(int(receiver), int(sender), number)


def parallel_time(interactions: int, n: int) -> float:
    if n < 1:
        raise InvalidPopulation(f"n must be positive, got {n}")
    return interactions / n


def default_budget(n: int) -> int:
    """10^4 * n * ceil(log2 n)^2 interactions."""
    return 10_000 * n * max(1, math.ceil(math.log2(n))) ** 2


class Population:
    """The n agent states of one run plus its interaction counter.

    ``agents`` is either a list of state objects (Python transitions) or a
    2-D integer array with one row per agent (compiled kernels).
    """

    def __init__(self, agents, interactions: int = 0):
        if len(agents) < 2:
            raise InvalidPopulation(f"need at least two agents, got n={len(agents)}")
        self.agents = agents
        self._n = len(agents)
        self.interactions = int(interactions)

    @property
    def n(self) -> int:
        return self._n

    @property
    def parallel_time(self) -> float:
        return self.interactions / self._n

    def __len__(self) -> int:
        return self._n

    def copy(self) -> "Population":
        agents = self.agents.copy() if isinstance(self.agents, np.ndarray) else list(self.agents)
        return Population(agents, self.interactions)


class Trace:
    """Metric snapshots at a fixed cadence, plus an optional interaction log.

    Snapshots are stored flat in a ``double`` array: one row per snapshot,
    columns given by ``columns`` (the first is always parallel time).
    """

    def __init__(self, columns: Sequence[str] = ("parallel_time",), log_interactions: bool = False):
        self.columns = tuple(columns)
        if self.columns[0] != "parallel_time":
            raise ValueError("first trace column must be parallel_time")
        self._data = array("d")
        self.log: Optional[list[InteractionRecord]] = [] if log_interactions else None

    def record(self, values: Sequence[float]) -> None:
        if len(values) != len(self.columns):
            raise ValueError(f"expected {len(self.columns)} values, got {len(values)}")
        if len(self._data) and values[0] <= self._data[len(self._data) - len(self.columns)]:
            return
        self._data.extend(float(v) for v in values)

    def __len__(self) -> int:
        return len(self._data) // len(self.columns)

    def as_array(self) -> np.ndarray:
        return np.frombuffer(self._data, dtype=np.float64).reshape(-1, len(self.columns)).copy()

    def column(self, name: str) -> np.ndarray:
        return self.as_array()[:, self.columns.index(name)]


@dataclass
class RunResult:
    """Outcome of one trial.

    The scheduler fills the first block; protocol drivers fill the rest.
    """

    converged: bool
    interactions: int
    n: int
    convergence_parallel_time: Optional[float] = None
    trace: Optional[Trace] = None
    outputs: Optional[list] = None
    error: Optional[float] = None
    restart_count: int = 0
    field_ranges: dict = field(default_factory=dict)
    role_counts: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def parallel_time(self) -> float:
        return self.interactions / self.n


class _Pairwise:
    """Adapter running a per-pair Python transition through the batch interface."""

    def __init__(self, step: Callable, trace: Optional[Trace]):
        self.step = step
        self.trace = trace

    def advance(self, population: Population, rng: Rng, count: int) -> None:
        agents = population.agents
        n = population.n
        log = self.trace.log if self.trace is not None else None
        for _ in range(count):
            population.interactions += 1
            receiver, sender = draw_pair(rng.state, n)
            record = InteractionRecord(int(receiver), int(sender), population.interactions)
            if log is not None:
                log.append(record)
            agents[receiver], agents[sender] = self.step(agents[receiver], agents[sender], record, rng)


def run(
    population: Population,
    rng: Rng,
    step_fn: Any,
    stop: Callable[[Population], bool],
    recorder: Optional[Trace] = None,
    max_interactions: Optional[int] = None,
    snapshot_every: Optional[int] = None,
    probe: Optional[Callable[[Population], Sequence[float]]] = None,
) -> RunResult:
    """Drive ``population`` until ``stop`` holds or the budget runs out.

    ``stop`` is evaluated before the first interaction and then after every
    ``snapshot_every`` interactions (default n, one unit of parallel time), so
    reported convergence times are resolved to that cadence. ``probe`` maps
    the population to the non-time columns of ``recorder``.

    Exhausting the budget is not an error: the result is just not converged.
    """
    n = population.n
    if max_interactions is None:
        max_interactions = default_budget(n)
    if max_interactions <= 0:
        raise ValueError("max_interactions must be positive")
    cadence = n if snapshot_every is None else int(snapshot_every)
    if cadence < 1:
        raise ValueError("snapshot_every must be at least 1")

    protocol = step_fn if hasattr(step_fn, "advance") else _Pairwise(step_fn, recorder)

    def snapshot():
        if recorder is not None:
            extra = list(probe(population)) if probe is not None else []
            recorder.record([population.parallel_time] + extra)

    start = population.interactions
    snapshot()
    converged = bool(stop(population))
    while not converged and population.interactions - start < max_interactions:
        chunk = min(cadence, max_interactions - (population.interactions - start))
        protocol.advance(population, rng, chunk)
        snapshot()
        converged = bool(stop(population))

    return RunResult(
        converged=converged,
        interactions=population.interactions,
        n=n,
        convergence_parallel_time=population.parallel_time if converged else None,
        trace=recorder,
    )
