import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from popsize._state import AgentState
from popsize.engine import InteractionRecord, Population, run
from popsize.primitives import (
    EXPLICIT, SYNTHETIC, GeometricSampler, InvalidParameter, PhaseClockState,
    SyntheticGeometric, epidemic_max, phase_advance, phase_tick, restart,
    sample_geometric, synthetic_coin_bit,
)
from popsize.rng import Rng


def test_geometric_p1_is_one():
    rng = Rng(0)
    assert {sample_geometric(rng, 1.0) for _ in range(100)} == {1}


@pytest.mark.parametrize("p", [0.0, -0.1, 1.5])
def test_geometric_rejects_bad_p(p):
    with pytest.raises(InvalidParameter):
        sample_geometric(Rng(0), p)


def test_geometric_half_mean_and_survival():
    from popsize.statlab import sample_max_geometric

    g = sample_max_geometric(Rng(1), 1, 10**6)
    assert 1.99 <= g.mean() <= 2.01
    assert g.min() >= 1
    for t in range(1, 11):
        p = 0.5 ** (t - 1)
        emp = float(np.mean(g >= t))
        assert abs(emp - p) <= 3 * math.sqrt(p * (1 - p) / g.size) + 1e-12


def test_geometric_general_p_mean():
    rng = Rng(2)
    xs = [sample_geometric(rng, 0.25) for _ in range(40_000)]
    assert abs(np.mean(xs) - 4.0) < 0.1


def test_synthetic_coin_bit_roles():
    rec = InteractionRecord(3, 7)
    assert synthetic_coin_bit(rec, 3) == 1
    assert synthetic_coin_bit(rec, 7) == 0
    with pytest.raises(ValueError):
        synthetic_coin_bit(rec, 4)


def test_synthetic_coin_fair_for_fixed_agent():
    from popsize.engine import pick_pair

    rng = Rng(8)
    bits = []
    while len(bits) < 200_000:
        rec = pick_pair(rng, 5)
        if 0 in (rec.receiver, rec.sender):
            bits.append(synthetic_coin_bit(rec, 0))
    assert abs(np.mean(bits) - 0.5) < 3 * 0.5 / math.sqrt(len(bits))


def test_synthetic_geometric_accumulates():
    g = SyntheticGeometric()
    assert not g.advance(InteractionRecord(1, 0), 0)
    assert not g.advance(InteractionRecord(2, 0), 0)
    assert g.advance(InteractionRecord(0, 2), 0)
    assert g.value == 3
    assert g.advance(InteractionRecord(1, 0), 0) and g.value == 3


def test_sampler_validation():
    with pytest.raises(InvalidParameter):
        GeometricSampler(p=0.3, mechanism=SYNTHETIC)
    with pytest.raises(InvalidParameter):
        GeometricSampler(mechanism="dice")
    with pytest.raises(InvalidParameter):
        GeometricSampler(p=0)


@pytest.mark.parametrize("mechanism", [EXPLICIT, SYNTHETIC])
def test_sampler_mean_two(mechanism):
    sampler = GeometricSampler(mechanism=mechanism)
    rng = Rng(6)
    xs = np.array([sampler.sample(rng) for _ in range(40_000)])
    assert xs.min() >= 1
    assert abs(xs.mean() - 2.0) < 4 * math.sqrt(2 / xs.size)


def test_epidemic_max_examples():
    assert epidemic_max(3, 7) == (7, 7)
    assert epidemic_max(7, 3) == (7, 7)
    assert epidemic_max(5, 5) == (5, 5)


@given(st.lists(st.integers(-100, 100), min_size=1, max_size=20))
def test_epidemic_max_fold_properties(values):
    acc = values[0]
    for v in values[1:]:
        acc, _ = epidemic_max(acc, v)
    assert acc == max(values)
    for a in values[:3]:
        for b in values[:3]:
            assert epidemic_max(a, b) == epidemic_max(b, a)
            assert epidemic_max(*epidemic_max(a, b)) == epidemic_max(a, b)


def test_epidemic_completion_within_8_ln_n():
    from popsize.statlab import measure_epidemic_time

    n = 3000
    times = [measure_epidemic_time(n, 1.0, Rng(s)) for s in range(200)]
    assert np.mean(np.array(times) <= 8 * math.log(n)) >= 0.99


def test_epidemic_max_monotone_under_scheduler():
    values = list(range(30))
    pop = Population(values)
    holders = []

    def probe_stop(p):
        holders.append(sum(v == 29 for v in p.agents))
        return holders[-1] == 30

    run(pop, Rng(2), lambda r, s, rec, rng: epidemic_max(r, s), stop=probe_stop,
        max_interactions=10**6, snapshot_every=1)
    assert holders == sorted(holders)
    assert max(pop.agents) == 29


def test_phase_tick_fires_on_third():
    s = PhaseClockState(time=0, threshold=3)
    fired = []
    for _ in range(3):
        s, f = phase_tick(s)
        fired.append(f)
    assert fired == [False, False, True]
    s = phase_advance(s)
    assert (s.time, s.epoch) == (0, 1)


def test_phase_tick_cte_clk_product():
    s = PhaseClockState(threshold=140 * 11)
    tick = 0
    fired = False
    while not fired:
        s, fired = phase_tick(s)
        tick += 1
    assert tick == 1540


def test_phase_clock_validation():
    with pytest.raises(InvalidParameter):
        PhaseClockState(threshold=0)


def test_restart_example():
    a = AgentState(role="A", clk=9, gr=4, time=17, epoch=12, sum=40, protocol_done=True)
    b = restart(a, Rng(0))
    assert (b.epoch, b.sum, b.time, b.protocol_done) == (0, 0, 0, False)
    assert (b.role, b.clk) == ("A", 9)
    assert b.gr >= 1


def test_restart_af_resets_gr():
    a = AgentState(role="A", clk=9, gr=4, gr_generated=True, epoch=3, sum=8)
    b = restart(a, Rng(0), variant="af")
    assert b.gr == 1 and not b.gr_generated


def test_restart_initial_agent_only_gr_changes():
    a = AgentState()
    b = restart(a, Rng.from_bits([0, 0, 1]))
    assert b.replace(gr=1) == a
    assert b.gr == 3


def test_restart_rejects_unknown_variant():
    with pytest.raises(InvalidParameter):
        restart(AgentState(), Rng(0), variant="xy")


agent_states = st.builds(
    AgentState,
    role=st.sampled_from(["X", "A", "S", "F"]),
    clk=st.integers(1, 40), gr=st.integers(1, 40), time=st.integers(0, 10**4),
    epoch=st.integers(0, 500), sum=st.integers(0, 10**4),
    updated_sum=st.booleans(), protocol_done=st.booleans(),
)


@settings(max_examples=300, deadline=None)
@given(agent=agent_states, seed=st.integers(0, 2**32), variant=st.sampled_from(["as", "af"]))
def test_restart_properties(agent, seed, variant):
    b = restart(agent, Rng(seed), variant)
    assert (b.role, b.clk) == (agent.role, agent.clk)
    assert (b.time, b.sum, b.epoch) == (0, 0, 0)
    assert not b.protocol_done
    assert b.gr >= 1
