"""Exhaustive comparison of the compiled transition against ``oracle``.

Breadth-first over every configuration reachable within a horizon, every
ordered pair and every geometric outcome up to ``gmax``. Each geometric draw
g is fed to the kernel as the scripted bits 0^(g-1) 1, and the kernel must
consume exactly those bits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

import oracle
from popsize import _state as st
from popsize.estimation import ProtocolParams, pair_kernel
from popsize.rng import Rng


def to_rows(config) -> np.ndarray:
    rows = np.zeros((len(config), st.NFIELDS), dtype=np.int64)
    for i, row in enumerate(config):
        a = dict(zip(oracle.FIELDS, row))
        state = st.AgentState(
            role=a["role"], clk=a["clk"], gr=a["gr"], time=a["time"], epoch=a["epoch"],
            sum=a["sum"], updated_sum=a["upd"], log_size2_generated=a["clkgen"],
            gr_generated=a["grgen"], protocol_done=a["done"], output=a["out"])
        st.state_to_row(state, rows[i])
    return rows


def from_rows(rows) -> tuple:
    out = []
    for row in rows:
        s = st.row_to_state(row)
        out.append((s.role, s.clk, s.gr, s.time, s.epoch, s.sum, s.updated_sum,
                    s.log_size2_generated, s.gr_generated, s.protocol_done, s.output))
    return tuple(out)


def geometric_bits(draws) -> list[int]:
    return [b for g in draws for b in [0] * (g - 1) + [1]]


@dataclass
class EnumerationResult:
    checks: int
    configurations: int
    mismatches: list


def explore(n: int, variant: str, horizon: int, offset: int = 0, gmax: int = 2,
            cte: int = 1, mult: int = 1, cap: int = 2, max_mismatches: int = 5) -> EnumerationResult:
    params = ProtocolParams(variant=variant, cte=cte, epoch_multiplier=mult,
                            clk_offset=offset, time_cap_factor=cap).as_array()
    frontier = {oracle.freeze([oracle.fresh() for _ in range(n)])}
    seen = set(frontier)
    checks = 0
    mismatches = []
    for _ in range(horizon):
        nxt = set()
        for config in frontier:
            for r in range(n):
                for s in range(n):
                    if r == s:
                        continue
                    for draws, expected in oracle.successors(config, r, s, variant, cte, mult,
                                                             offset, cap, gmax):
                        rng = Rng.from_bits(geometric_bits(draws))
                        rows = to_rows(config)
                        pair_kernel(rows, r, s, params, rng.state, st.new_ranges())
                        got = from_rows(rows)
                        checks += 1
                        if got != expected or rng.buffered_bits != 0:
                            if len(mismatches) < max_mismatches:
                                mismatches.append((config, r, s, draws, got, expected))
                        nxt.add(expected)
        frontier = nxt - seen
        seen |= nxt
    return EnumerationResult(checks, len(seen), mismatches)
