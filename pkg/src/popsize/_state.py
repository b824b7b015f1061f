"""Agent record layout shared by the compiled kernels and the Python API.

A population is an ``(n, NFIELDS)`` int64 array, one row per agent. Kernels
address columns through the module constants below; the Python side converts
rows to and from :class:`AgentState`.

The output is kept as an exact ratio ``ONUM / ODEN + 1`` so that equality of
outputs is decided on integers.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from fractions import Fraction
from typing import Optional

import numpy as np
from numba import njit

from .rng import geometric_half

ROLE = 0
CLK = 1
GR = 2
TIME = 3
EPOCH = 4
SUM = 5
UPD = 6
CLKGEN = 7
GRGEN = 8
DONE = 9
HASOUT = 10
ONUM = 11
ODEN = 12
LEADER = 13
PHASE = 14
LTIME = 15
LCLK = 16
TERM = 17
NFIELDS = 18

ROLE_X = 0
ROLE_A = 1
ROLE_S = 2
ROLE_F = 3
ROLE_NAMES = ("X", "A", "S", "F")
ROLE_CODES = {name: code for code, name in enumerate(ROLE_NAMES)}

VARIANT_AS = 0
VARIANT_AF = 1
VARIANT_CODES = {"as": VARIANT_AS, "af": VARIANT_AF}

# ranges[] slots: observed maxima plus event counters
R_CLK = 0
R_GR = 1
R_TIME = 2
R_EPOCH = 3
R_SUM = 4
R_RESTARTS = 5
R_LEADER_CLASH = 6
NRANGES = 7
RANGE_NAMES = ("clk", "gr", "time", "epoch", "sum")


@dataclass
class AgentState:
    """One agent's memory, in plain Python values.

    ``output`` is ``None`` until the agent holds a result. Leader fields are
    only meaningful in the leader-driven variant.
    """

    role: str = "X"
    clk: int = 1
    gr: int = 1
    time: int = 0
    epoch: int = 0
    sum: int = 0
    updated_sum: bool = False
    log_size2_generated: bool = False
    gr_generated: bool = False
    protocol_done: bool = False
    output: Optional[Fraction] = None
    is_leader: bool = False
    phase: int = 0
    leader_time: int = 0
    terminated: bool = False

    def __post_init__(self):
        if self.role not in ROLE_CODES:
            raise ValueError(f"unknown role {self.role!r}")

    def replace(self, **changes) -> "AgentState":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return AgentState(**values)


def state_to_row(state: AgentState, row: np.ndarray) -> None:
    row[:] = 0
    row[ROLE] = ROLE_CODES[state.role]
    row[CLK] = state.clk
    row[GR] = state.gr
    row[TIME] = state.time
    row[EPOCH] = state.epoch
    row[SUM] = state.sum
    row[UPD] = state.updated_sum
    row[CLKGEN] = state.log_size2_generated
    row[GRGEN] = state.gr_generated
    row[DONE] = state.protocol_done
    if state.output is not None:
        frac = Fraction(state.output) - 1
        row[HASOUT] = 1
        row[ONUM] = frac.numerator
        row[ODEN] = frac.denominator
    row[LEADER] = state.is_leader
    row[PHASE] = state.phase
    row[LTIME] = state.leader_time
    row[LCLK] = state.clk
    row[TERM] = state.terminated


def row_to_state(row: np.ndarray) -> AgentState:
    output = None
    if row[HASOUT]:
        output = Fraction(int(row[ONUM]), int(row[ODEN])) + 1
    return AgentState(
        role=ROLE_NAMES[int(row[ROLE])],
        clk=int(row[CLK]),
        gr=int(row[GR]),
        time=int(row[TIME]),
        epoch=int(row[EPOCH]),
        sum=int(row[SUM]),
        updated_sum=bool(row[UPD]),
        log_size2_generated=bool(row[CLKGEN]),
        gr_generated=bool(row[GRGEN]),
        protocol_done=bool(row[DONE]),
        output=output,
        is_leader=bool(row[LEADER]),
        phase=int(row[PHASE]),
        leader_time=int(row[LTIME]),
        terminated=bool(row[TERM]),
    )


def initial_rows(n: int) -> np.ndarray:
    agents = np.zeros((n, NFIELDS), dtype=np.int64)
    agents[:, CLK] = 1
    agents[:, GR] = 1
    agents[:, LCLK] = 1
    return agents


def new_ranges() -> np.ndarray:
    ranges = np.zeros(NRANGES, dtype=np.int64)
    ranges[R_CLK] = 1
    ranges[R_GR] = 1
    return ranges


@njit(nogil=True, cache=True)
def restart_row(agents, i, variant, state, ranges):
    """Reset the downstream computation of agent ``i``; role and clk survive."""
    agents[i, TIME] = 0
    agents[i, SUM] = 0
    agents[i, EPOCH] = 0
    agents[i, DONE] = 0
    agents[i, UPD] = 0
    agents[i, HASOUT] = 0
    agents[i, ONUM] = 0
    agents[i, ODEN] = 0
    if variant == VARIANT_AS:
        agents[i, GR] = geometric_half(state)
    else:
        agents[i, GR] = 1
        agents[i, GRGEN] = 0
    ranges[R_RESTARTS] += 1
