"""Quick slices of the exhaustive oracle comparison.

The full horizon-12 enumeration for n in {2, 3} runs in the acceptance suite.
"""

import pytest

import oracle
from enumeration import explore, geometric_bits, to_rows, from_rows


def test_round_trip_of_oracle_configurations():
    config = oracle.freeze([oracle.fresh(), dict(oracle.fresh(), role="A", clk=4, gr=2)])
    assert from_rows(to_rows(config)) == config


def test_geometric_bits():
    assert geometric_bits([1, 3]) == [1, 0, 0, 1]


@pytest.mark.parametrize("variant,offset,gmax", [("as", 0, 2), ("af", 0, 1)])
def test_two_agents_full_horizon(variant, offset, gmax):
    res = explore(2, variant, 12, offset=offset, gmax=gmax)
    assert res.mismatches == []
    assert res.checks > 100


@pytest.mark.parametrize("variant,offset,gmax", [("as", 2, 2), ("as", 0, 2), ("af", 0, 1)])
def test_three_agents_short_horizon(variant, offset, gmax):
    res = explore(3, variant, 7, offset=offset, gmax=gmax)
    assert res.mismatches == []


def test_larger_constants_two_agents():
    res = explore(2, "as", 10, offset=1, gmax=3, cte=2, mult=2)
    assert res.mismatches == []
