"""Building blocks shared by the protocols.

* geometric variables, drawn either from explicit random bits or from the
  scheduler itself (synthetic coin: being the receiver is heads);
* the two-way max epidemic;
* a per-agent phase clock that counts interactions against a threshold;
* the restart pattern that wipes downstream state when ``clk`` grows.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _state as st
from ._state import AgentState
from .engine import InteractionRecord
from .rng import Rng

EXPLICIT = "explicit-rng"
SYNTHETIC = "synthetic-coin"


class InvalidParameter(ValueError):
    pass


def sample_geometric(rng: Rng, p: float = 0.5) -> int:
    """Number of flips up to and including the first head, Pr[head] = p.

    Flips are drawn one at a time from ``rng``; for p = 1/2 each flip costs
    exactly one fair bit.
    """
    if not (0.0 < p <= 1.0):
        raise InvalidParameter(f"p must lie in (0, 1], got {p}")
    if p == 1.0:
        return 1
    return rng.geometric(p)


def synthetic_coin_bit(record: InteractionRecord, agent_index: int) -> int:
    """1 if the agent is the receiver of this interaction (heads), 0 if the sender."""
    if agent_index == record.receiver:
        return 1
    if agent_index == record.sender:
        return 0
    raise ValueError(f"agent {agent_index} is not part of interaction {record}")


@dataclass
class SyntheticGeometric:
    """A 1/2-geometric variable assembled over many interactions.

    Starts at 1; every interaction as sender (tails) adds one, the first one
    as receiver (heads) completes it.
    """

    value: int = 1
    complete: bool = False

    def advance(self, record: InteractionRecord, agent_index: int) -> bool:
        if not self.complete:
            if synthetic_coin_bit(record, agent_index):
                self.complete = True
            else:
                self.value += 1
        return self.complete


@dataclass(frozen=True)
class GeometricSampler:
    p: float = 0.5
    mechanism: str = EXPLICIT

    def __post_init__(self):
        if not (0.0 < self.p <= 1.0):
            raise InvalidParameter(f"p must lie in (0, 1], got {self.p}")
        if self.mechanism not in (EXPLICIT, SYNTHETIC):
            raise InvalidParameter(f"unknown mechanism {self.mechanism!r}")
        if self.mechanism == SYNTHETIC and self.p != 0.5:
            raise InvalidParameter("the synthetic coin is fair, so p must be 1/2")

    def sample(self, rng: Rng) -> int:
        """One complete draw.

        With the synthetic mechanism the coin is the role of a fixed agent in
        scheduler-drawn interactions that involve it (two agents suffice).
        """
        if self.mechanism == EXPLICIT:
            return sample_geometric(rng, self.p)
        from .engine import pick_pair

        g = SyntheticGeometric()
        while not g.complete:
            g.advance(pick_pair(rng, 2), 0)
        return g.value


def epidemic_max(x, y):
    """Both parties leave holding the larger value."""
    m = x if x >= y else y
    return m, m


@dataclass(frozen=True)
class PhaseClockState:
    time: int = 0
    threshold: int = 1
    epoch: int = 0

    def __post_init__(self):
        if self.threshold < 1:
            raise InvalidParameter(f"threshold must be >= 1, got {self.threshold}")
        if self.time < 0 or self.epoch < 0:
            raise InvalidParameter("time and epoch must be non-negative")


def phase_tick(state: PhaseClockState) -> tuple[PhaseClockState, bool]:
    """Count one interaction; ``fired`` reports that the threshold is reached.

    The caller decides whether to act on it (the protocols add their own
    conditions) and then calls :func:`phase_advance`.
    """
    new = replace(state, time=state.time + 1)
    return new, new.time >= new.threshold


def phase_advance(state: PhaseClockState) -> PhaseClockState:
    return replace(state, time=0, epoch=state.epoch + 1)


def restart(agent: AgentState, rng: Rng, variant: str = "as") -> AgentState:
    """Wipe the downstream computation; role and clk are kept.

    ``time``, ``sum`` and ``epoch`` go to 0 and the agent is no longer done.
    The ``as`` variant redraws ``gr``; the ``af`` variant resets it to 1 and
    marks it as not yet generated.
    """
    if variant not in st.VARIANT_CODES:
        raise InvalidParameter(f"variant must be 'as' or 'af', got {variant!r}")
    rows = np.zeros((1, st.NFIELDS), dtype=np.int64)
    st.state_to_row(agent, rows[0])
    st.restart_row(rows, 0, st.VARIANT_CODES[variant], rng.state, st.new_ranges())
    out = st.row_to_state(rows[0])
    # leader bookkeeping is not part of the restart
    return replace(out, is_leader=agent.is_leader, phase=agent.phase,
                   leader_time=agent.leader_time, terminated=agent.terminated)
