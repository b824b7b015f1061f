"""Uniform leaderless estimation of log2 n.

Two variants share one agent layout (see :mod:`popsize._state`):

``as``
    Agents split into roles A and S. A agents draw geometric variables with
    explicit random bits, keep a per-agent phase clock of length ``cte * clk``
    and, once per epoch, deposit the population maximum of their current
    variable into an S agent's running sum.
``af``
    Agents split into A and F. A agents build their geometric variables from
    the scheduler itself (sender = tails, receiver = heads, counted only in
    meetings with F agents) and keep the running sum themselves.

In both variants the largest ``clk`` wins by epidemic and any agent that
learns a larger ``clk`` restarts everything downstream of it. After
``epoch_multiplier * clk`` epochs the estimate is ``sum / epoch + 1``.

Every transition lives in one compiled function acting on rows of the
population array; the single-pair Python helpers here just wrap it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np
from numba import njit

from . import _state as st
from ._state import (
    CLK, CLKGEN, DONE, EPOCH, GR, GRGEN, HASOUT, LCLK, LEADER, LTIME, ODEN, ONUM,
    PHASE, R_LEADER_CLASH, R_RESTARTS, ROLE, ROLE_A, ROLE_F, ROLE_S, ROLE_X, SUM,
    TERM, TIME, UPD, VARIANT_AF, VARIANT_AS, AgentState, restart_row,
)
from .engine import Population, RunResult, Trace, draw_pair, run
from .rng import Rng, geometric_half

_RANGE_COLS = (CLK, GR, TIME, EPOCH, SUM)

# params[] slots handed to the kernels
P_VARIANT = 0
P_CTE = 1
P_MULT = 2
P_OFFSET = 3
P_CAP = 4
P_K2 = 5
P_STOP_ON_TERM = 6
P_LEADER = 7
NPARAMS = 8

FAITHFUL_CTE = {"as": 140, "af": 200}
FAST_CTE = 16


@dataclass(frozen=True)
class ProtocolParams:
    """Variant selector and the protocol constants.

    Attributes:
        variant: ``"as"`` (explicit random bits) or ``"af"`` (synthetic coins).
        cte: Epoch length coefficient; an epoch lasts ``cte * clk`` own interactions.
        epoch_multiplier: The run ends after ``epoch_multiplier * clk`` epochs.
        clk_offset: Added to each clk geometric draw in the ``as`` variant.
        time_cap_factor: ``time`` saturates at ``time_cap_factor * cte * clk``.
    """

    variant: str = "as"
    cte: int = FAITHFUL_CTE["as"]
    epoch_multiplier: int = 5
    clk_offset: int = 2
    time_cap_factor: int = 2

    def __post_init__(self):
        if self.variant not in st.VARIANT_CODES:
            raise ValueError(f"variant must be 'as' or 'af', got {self.variant!r}")
        if self.cte < 1:
            raise ValueError(f"cte must be >= 1, got {self.cte}")
        if self.epoch_multiplier < 1:
            raise ValueError(f"epoch_multiplier must be >= 1, got {self.epoch_multiplier}")
        if self.time_cap_factor < 1:
            raise ValueError("time_cap_factor must be >= 1")

    @classmethod
    def faithful(cls, variant: str = "as", **overrides) -> "ProtocolParams":
        return cls(variant=variant, cte=FAITHFUL_CTE[variant], **overrides)

    @classmethod
    def fast(cls, variant: str = "as", **overrides) -> "ProtocolParams":
        return cls(variant=variant, cte=FAST_CTE, **overrides)

    def as_array(self, k2: int = 4, stop_on_term: bool = False, leader: bool = False) -> np.ndarray:
        out = np.zeros(NPARAMS, dtype=np.int64)
        out[P_VARIANT] = st.VARIANT_CODES[self.variant]
        out[P_CTE] = self.cte
        out[P_MULT] = self.epoch_multiplier
        out[P_OFFSET] = self.clk_offset
        out[P_CAP] = self.time_cap_factor
        out[P_K2] = k2
        out[P_STOP_ON_TERM] = stop_on_term
        out[P_LEADER] = leader
        return out


# ---------------------------------------------------------------- kernels
#
# Each variant is one loop kernel with the whole transition written inline.
# Splitting it into small jitted helpers that take arrays costs an atomic
# refcount pair per call, which dominated the run time; rare branches
# (restarts) still call out.


@njit(nogil=True, cache=True)
def _run_as(agents, state, params, ranges, count, fixed_r, fixed_s):
    n = agents.shape[0]
    cte = params[P_CTE]
    mult = params[P_MULT]
    offset = params[P_OFFSET]
    capf = params[P_CAP]
    leader_mode = params[P_LEADER]
    k2 = params[P_K2]
    stop_on_term = params[P_STOP_ON_TERM]
    for it in range(count):
        if fixed_r >= 0:
            r = fixed_r
            s = fixed_s
        else:
            r, s = draw_pair(state, n)

        # roles
        if agents[r, ROLE] == ROLE_X:
            sr = agents[s, ROLE]
            if sr == ROLE_X:
                agents[s, ROLE] = ROLE_A
                g = geometric_half(state) + offset
                if g > agents[s, CLK]:
                    agents[s, CLK] = g
                agents[r, ROLE] = ROLE_S
            elif sr == ROLE_A:
                agents[r, ROLE] = ROLE_S
            elif sr == ROLE_S:
                agents[r, ROLE] = ROLE_A
                g = geometric_half(state) + offset
                if g > agents[r, CLK]:
                    agents[r, CLK] = g

        # phase clock of each A participant, receiver first
        for k in range(2):
            i = r if k == 0 else s
            if agents[i, ROLE] == ROLE_A:
                cc = cte * agents[i, CLK]
                t = agents[i, TIME] + 1
                if t > capf * cc:
                    t = capf * cc
                agents[i, TIME] = t
                if t >= cc and agents[i, DONE] == 0 and agents[i, UPD] != 0:
                    agents[i, EPOCH] += 1
                    agents[i, TIME] = 0
                    agents[i, GR] = geometric_half(state)
                    agents[i, UPD] = 0
                if agents[i, EPOCH] >= mult * agents[i, CLK]:
                    agents[i, DONE] = 1

        # largest clk wins; the loser restarts
        if agents[r, CLK] != agents[s, CLK]:
            lo = r if agents[r, CLK] < agents[s, CLK] else s
            hi = s if lo == r else r
            agents[lo, CLK] = agents[hi, CLK]
            restart_row(agents, lo, VARIANT_AS, state, ranges)

        rr = agents[r, ROLE]
        sr = agents[s, ROLE]
        if rr == sr and agents[r, EPOCH] != agents[s, EPOCH] and (rr == ROLE_A or rr == ROLE_S):
            lo = r if agents[r, EPOCH] < agents[s, EPOCH] else s
            hi = s if lo == r else r
            agents[lo, EPOCH] = agents[hi, EPOCH]
            if rr == ROLE_A:
                agents[lo, TIME] = 0
                agents[lo, GR] = geometric_half(state)
                agents[lo, UPD] = 0
            else:
                agents[lo, SUM] = agents[hi, SUM]

        if (rr == ROLE_A and sr == ROLE_S) or (rr == ROLE_S and sr == ROLE_A):
            a = r if rr == ROLE_A else s
            b = s if a == r else r
            if (agents[a, EPOCH] == agents[b, EPOCH]
                    and agents[a, TIME] >= cte * agents[a, CLK]
                    and agents[a, DONE] == 0):
                agents[b, EPOCH] += 1
                agents[b, SUM] += agents[a, GR]
                agents[a, UPD] = 1
            elif agents[a, EPOCH] < agents[b, EPOCH]:
                agents[a, UPD] = 1

        if rr == ROLE_A and sr == ROLE_A and agents[r, EPOCH] == agents[s, EPOCH]:
            if agents[r, GR] < agents[s, GR]:
                agents[r, GR] = agents[s, GR]
            elif agents[s, GR] < agents[r, GR]:
                agents[s, GR] = agents[r, GR]

        # an S agent that has collected all epochs produces the output
        for k in range(2):
            i = r if k == 0 else s
            if (agents[i, ROLE] == ROLE_S and agents[i, DONE] == 0
                    and agents[i, EPOCH] >= mult * agents[i, CLK]):
                agents[i, DONE] = 1
                agents[i, HASOUT] = 1
                agents[i, ONUM] = agents[i, SUM]
                agents[i, ODEN] = agents[i, EPOCH]

        _spread_output(agents, r, s)

        for k in range(2):
            i = r if k == 0 else s
            for c in range(5):
                v = agents[i, _RANGE_COLS[c]]
                if v > ranges[c]:
                    ranges[c] = v

        if leader_mode != 0:
            if agents[r, LEADER] != 0 and agents[s, LEADER] != 0:
                ranges[R_LEADER_CLASH] += 1
            fired = False
            for k in range(2):
                i = r if k == 0 else s
                if agents[i, LEADER] != 0:
                    if agents[i, LCLK] != agents[i, CLK]:
                        agents[i, LCLK] = agents[i, CLK]
                        agents[i, PHASE] = 0
                        agents[i, LTIME] = 0
                    agents[i, LTIME] += 1
                    if agents[i, LTIME] >= cte * agents[i, CLK]:
                        agents[i, PHASE] += 1
                        agents[i, LTIME] = 0
                    if agents[i, TERM] == 0 and agents[i, PHASE] >= k2 * mult * agents[i, CLK]:
                        agents[i, TERM] = 1
                        fired = True
            if agents[r, TERM] != 0 or agents[s, TERM] != 0:
                agents[r, TERM] = 1
                agents[s, TERM] = 1
            if fired and stop_on_term != 0:
                return it + 1
    return count


@njit(nogil=True, cache=True)
def _run_af(agents, state, params, ranges, count, fixed_r, fixed_s):
    n = agents.shape[0]
    cte = params[P_CTE]
    mult = params[P_MULT]
    capf = params[P_CAP]
    for it in range(count):
        if fixed_r >= 0:
            r = fixed_r
            s = fixed_s
        else:
            r, s = draw_pair(state, n)

        if agents[r, ROLE] == ROLE_X:
            sr = agents[s, ROLE]
            if sr == ROLE_X:
                agents[s, ROLE] = ROLE_A
                agents[r, ROLE] = ROLE_F
            elif sr == ROLE_A:
                agents[r, ROLE] = ROLE_F
            elif sr == ROLE_F:
                agents[r, ROLE] = ROLE_A

        for k in range(2):
            i = r if k == 0 else s
            if agents[i, ROLE] == ROLE_A:
                cc = cte * agents[i, CLK]
                t = agents[i, TIME] + 1
                if t > capf * cc:
                    t = capf * cc
                agents[i, TIME] = t
                if t >= cc and agents[i, DONE] == 0:
                    agents[i, EPOCH] += 1
                    agents[i, SUM] += agents[i, GR]
                    agents[i, TIME] = 0
                    agents[i, GR] = 1
                    agents[i, GRGEN] = 0
                if agents[i, DONE] == 0 and agents[i, EPOCH] >= mult * agents[i, CLK]:
                    agents[i, DONE] = 1
                    agents[i, HASOUT] = 1
                    agents[i, ONUM] = agents[i, SUM]
                    agents[i, ODEN] = agents[i, EPOCH]

        rr = agents[r, ROLE]
        sr = agents[s, ROLE]
        # synthetic coin: sender = tails (keep counting), receiver = heads (stop)
        if (rr == ROLE_A and sr == ROLE_F) or (rr == ROLE_F and sr == ROLE_A):
            a = r if rr == ROLE_A else s
            if agents[a, CLKGEN] == 0:
                if a == s:
                    agents[a, CLK] += 1
                else:
                    agents[a, CLKGEN] = 1
                    agents[a, CLK] += 2
            elif agents[a, GRGEN] == 0:
                if a == s:
                    agents[a, GR] += 1
                else:
                    agents[a, GRGEN] = 1

        if rr == ROLE_A and sr == ROLE_A and agents[r, GRGEN] != 0 and agents[s, GRGEN] != 0:
            if agents[r, CLK] != agents[s, CLK]:
                lo = r if agents[r, CLK] < agents[s, CLK] else s
                hi = s if lo == r else r
                agents[lo, CLK] = agents[hi, CLK]
                restart_row(agents, lo, VARIANT_AF, state, ranges)
            if agents[r, GRGEN] != 0 and agents[s, GRGEN] != 0:
                if agents[r, EPOCH] != agents[s, EPOCH]:
                    lo = r if agents[r, EPOCH] < agents[s, EPOCH] else s
                    hi = s if lo == r else r
                    agents[lo, EPOCH] = agents[hi, EPOCH]
                    agents[lo, SUM] += agents[lo, GR]
                    agents[lo, TIME] = 0
                    agents[lo, GR] = 1
                    agents[lo, GRGEN] = 0
                # only generated values are propagated, so an agent that
                # just banked (grGenerated cleared) sits this one out
                if (agents[r, EPOCH] == agents[s, EPOCH]
                        and agents[r, GRGEN] != 0 and agents[s, GRGEN] != 0):
                    if agents[r, GR] < agents[s, GR]:
                        agents[r, GR] = agents[s, GR]
                    elif agents[s, GR] < agents[r, GR]:
                        agents[s, GR] = agents[r, GR]

        _spread_output(agents, r, s)

        for k in range(2):
            i = r if k == 0 else s
            for c in range(5):
                v = agents[i, _RANGE_COLS[c]]
                if v > ranges[c]:
                    ranges[c] = v
    return count


@njit(inline="always")
def _spread_output(agents, r, s):
    # a missing output is filled in; two different outputs both become the larger
    hr = agents[r, HASOUT]
    hs = agents[s, HASOUT]
    if hr == 0 and hs == 0:
        return
    src = -1
    dst = -1
    if hr != 0 and hs == 0:
        src = r
        dst = s
    elif hs != 0 and hr == 0:
        src = s
        dst = r
    else:
        lhs = agents[r, ONUM] * agents[s, ODEN]
        rhs = agents[s, ONUM] * agents[r, ODEN]
        if lhs < rhs:
            src = s
            dst = r
        elif rhs < lhs:
            src = r
            dst = s
    if src >= 0:
        agents[dst, HASOUT] = 1
        agents[dst, ONUM] = agents[src, ONUM]
        agents[dst, ODEN] = agents[src, ODEN]


@njit(nogil=True, cache=True)
def advance_kernel(agents, state, params, ranges, count):
    """Run ``count`` scheduled interactions; returns how many were performed.

    Fewer than ``count`` only when the leader terminates and the params ask
    to stop there.
    """
    if params[P_VARIANT] == VARIANT_AS:
        return _run_as(agents, state, params, ranges, count, -1, -1)
    return _run_af(agents, state, params, ranges, count, -1, -1)


@njit(nogil=True, cache=True)
def pair_kernel(agents, r, s, params, state, ranges):
    """Apply the transition to the fixed ordered pair (r, s) once."""
    if params[P_VARIANT] == VARIANT_AS:
        _run_as(agents, state, params, ranges, 1, r, s)
    else:
        _run_af(agents, state, params, ranges, 1, r, s)


@njit(nogil=True, cache=True)
def partition_kernel(agents, r, s, params, state):
    if agents[r, ROLE] != ROLE_X:
        return
    sr = agents[s, ROLE]
    as_variant = params[P_VARIANT] == VARIANT_AS
    other = ROLE_S if as_variant else ROLE_F
    if sr == ROLE_X:
        agents[s, ROLE] = ROLE_A
        if as_variant:
            g = geometric_half(state) + params[P_OFFSET]
            if g > agents[s, CLK]:
                agents[s, CLK] = g
        agents[r, ROLE] = other
    elif sr == ROLE_A:
        agents[r, ROLE] = other
    elif sr == other:
        agents[r, ROLE] = ROLE_A
        if as_variant:
            g = geometric_half(state) + params[P_OFFSET]
            if g > agents[r, CLK]:
                agents[r, CLK] = g


@njit(nogil=True, cache=True)
def converged_kernel(agents, variant):
    """Stable-termination test; see :func:`is_converged`."""
    n = agents.shape[0]
    max_clk = 0
    count_a = 0
    for i in range(n):
        if variant == VARIANT_AS or agents[i, ROLE] == ROLE_A:
            if agents[i, CLK] > max_clk:
                max_clk = agents[i, CLK]
    ref = -1
    for i in range(n):
        if agents[i, HASOUT] == 0:
            return False
        if ref < 0:
            ref = i
        elif agents[i, ONUM] * agents[ref, ODEN] != agents[ref, ONUM] * agents[i, ODEN]:
            return False
        if variant == VARIANT_AS or agents[i, ROLE] == ROLE_A:
            count_a += 1
            if agents[i, DONE] == 0 or agents[i, CLK] != max_clk:
                return False
    return count_a > 0


@njit(nogil=True, cache=True)
def converged_count(agents, variant):
    """Agents that are done and hold the population maximum clk."""
    n = agents.shape[0]
    max_clk = 0
    for i in range(n):
        if agents[i, CLK] > max_clk:
            max_clk = agents[i, CLK]
    c = 0
    for i in range(n):
        if agents[i, DONE] != 0 and agents[i, CLK] == max_clk:
            c += 1
    return c


# ---------------------------------------------------------------- Python API


class EstimationProtocol:
    """Batch transition object accepted by :func:`popsize.engine.run`."""

    def __init__(self, params: ProtocolParams):
        self.params = params
        self.param_array = params.as_array()
        self.ranges = st.new_ranges()

    def advance(self, population: Population, rng: Rng, count: int) -> None:
        done = advance_kernel(population.agents, rng.state, self.param_array, self.ranges, count)
        population.interactions += int(done)


def init_agent() -> AgentState:
    return AgentState()


def init_population(n: int) -> Population:
    return Population(st.initial_rows(n))


def _pair_call(kernel, receiver: AgentState, sender: AgentState, *args):
    rows = np.zeros((2, st.NFIELDS), dtype=np.int64)
    st.state_to_row(receiver, rows[0])
    st.state_to_row(sender, rows[1])
    ranges = st.new_ranges()
    kernel(rows, 0, 1, *args, ranges)
    return st.row_to_state(rows[0]), st.row_to_state(rows[1]), ranges


def partition_roles(receiver: AgentState, sender: AgentState, rng: Rng,
                    params: Optional[ProtocolParams] = None) -> tuple[AgentState, AgentState]:
    """Role assignment only: X,X -> S,A (or F,A); X meeting A or S/F as sender."""
    params = params or ProtocolParams()
    rows = np.zeros((2, st.NFIELDS), dtype=np.int64)
    st.state_to_row(receiver, rows[0])
    st.state_to_row(sender, rows[1])
    partition_kernel(rows, 0, 1, params.as_array(), rng.state)
    return st.row_to_state(rows[0]), st.row_to_state(rows[1])


def interact(receiver: AgentState, sender: AgentState, rng: Rng,
             params: Optional[ProtocolParams] = None) -> tuple[AgentState, AgentState]:
    """Full transition for one ordered pair; returns new (receiver, sender)."""
    params = params or ProtocolParams()
    rec, sen, _ = _pair_call(pair_kernel, receiver, sender, params.as_array(), rng.state)
    return rec, sen


def compute_output(sum_value: int, epochs: int) -> Fraction:
    if epochs <= 0:
        raise ValueError(f"output undefined for epochs={epochs}")
    return Fraction(int(sum_value), int(epochs)) + 1


def _rows(population: Union[Population, np.ndarray, Sequence[AgentState]]) -> np.ndarray:
    agents = population.agents if isinstance(population, Population) else population
    if isinstance(agents, np.ndarray):
        return agents
    rows = np.zeros((len(agents), st.NFIELDS), dtype=np.int64)
    for i, a in enumerate(agents):
        st.state_to_row(a, rows[i])
    return rows


def is_converged(population, variant: Optional[str] = None) -> bool:
    """True when the configuration can no longer change its output.

    Every agent holds the same output value, and every agent that runs the
    clock (all agents for ``as``, the A agents for ``af``) is done and holds
    the population maximum clk. ``variant`` is inferred from the roles when
    omitted.
    """
    rows = _rows(population)
    if variant is None:
        variant = "af" if np.any(rows[:, ROLE] == ROLE_F) else "as"
    return bool(converged_kernel(rows, st.VARIANT_CODES[variant]))


def outputs_of(population) -> list[Optional[Fraction]]:
    rows = _rows(population)
    out = []
    for row in rows:
        out.append(Fraction(int(row[ONUM]), int(row[ODEN])) + 1 if row[HASOUT] else None)
    return out


def role_counts(population) -> dict[str, int]:
    rows = _rows(population)
    counts = np.bincount(rows[:, ROLE], minlength=len(st.ROLE_NAMES))
    return {name: int(c) for name, c in zip(st.ROLE_NAMES, counts)}


TRACE_COLUMNS = ("parallel_time",) + tuple(
    f"{f}_{m}" for f in st.RANGE_NAMES for m in ("min", "max")) + ("converged_agents",)


@njit(nogil=True, cache=True)
def snapshot_kernel(agents, variant):
    """Per-field min/max over agents plus the count of settled agents."""
    out = np.empty(2 * len(_RANGE_COLS) + 1, dtype=np.float64)
    for c in range(len(_RANGE_COLS)):
        col = _RANGE_COLS[c]
        lo = agents[0, col]
        hi = agents[0, col]
        for i in range(1, agents.shape[0]):
            v = agents[i, col]
            if v < lo:
                lo = v
            if v > hi:
                hi = v
        out[2 * c] = lo
        out[2 * c + 1] = hi
    out[2 * len(_RANGE_COLS)] = converged_count(agents, variant)
    return out


def _probe(variant_code: int):
    return lambda population: snapshot_kernel(population.agents, variant_code)


def simulate(n: int, params: Optional[ProtocolParams] = None, seed: int = 0,
             max_interactions: Optional[int] = None, snapshot_every: Optional[int] = None,
             record_trace: bool = True) -> RunResult:
    """Run one trial from the all-X configuration until convergence or budget.

    Args:
        n: Population size, at least 2.
        params: Protocol constants; the faithful ``as`` profile by default.
        seed: Seed of the trial's random stream.
        max_interactions: Budget; the engine default when ``None``.
        snapshot_every: Stop-check and snapshot cadence in interactions.
        record_trace: Keep per-cadence min/max snapshots.

    Returns:
        A fully populated :class:`RunResult`.
    """
    params = params or ProtocolParams()
    population = init_population(n)
    rng = Rng(seed)
    protocol = EstimationProtocol(params)
    variant_code = st.VARIANT_CODES[params.variant]
    trace = Trace(TRACE_COLUMNS) if record_trace else None
    result = run(
        population, rng, protocol,
        stop=lambda pop: converged_kernel(pop.agents, variant_code),
        recorder=trace,
        max_interactions=max_interactions,
        snapshot_every=snapshot_every,
        probe=_probe(variant_code) if record_trace else None,
    )
    return finish_result(result, population, protocol.ranges, n)


def finish_result(result: RunResult, population: Population, ranges: np.ndarray, n: int) -> RunResult:
    outputs = outputs_of(population)
    result.outputs = outputs
    if all(o is not None for o in outputs):
        target = math.log2(n)
        result.error = max(abs(float(o) - target) for o in set(outputs))
    result.restart_count = int(ranges[R_RESTARTS])
    result.field_ranges = {name: int(ranges[i]) for i, name in enumerate(st.RANGE_NAMES)}
    result.role_counts = role_counts(population)
    return result


@dataclass(frozen=True)
class RunMetrics:
    """Per-trial summary with the reference range limits for comparison."""

    n: int
    converged: bool
    convergence_parallel_time: Optional[float]
    output: Optional[Fraction]
    output_rounded: Optional[int]
    error: Optional[float]
    restart_count: int
    field_ranges: dict
    range_limits: dict
    within_limits: dict


def range_limits(n: int) -> dict[str, float]:
    """Likely value ranges as functions of log2 n."""
    lg = math.log2(n)
    return {
        "clk": 2 * lg + 1,
        "gr": 2 * lg,
        "time": 191 * lg,
        "epoch": 11 * lg,
        "sum": 22 * lg * lg,
    }


def measure_run(result: RunResult, n: int) -> RunMetrics:
    limits = range_limits(n)
    output = None
    if result.outputs and all(o is not None for o in result.outputs) and len(set(result.outputs)) == 1:
        output = result.outputs[0]
    return RunMetrics(
        n=n,
        converged=result.converged,
        convergence_parallel_time=result.convergence_parallel_time,
        output=output,
        output_rounded=round(output) if output is not None else None,
        error=result.error,
        restart_count=result.restart_count,
        field_ranges=dict(result.field_ranges),
        range_limits=limits,
        within_limits={k: result.field_ranges.get(k, 0) <= v for k, v in limits.items()},
    )
