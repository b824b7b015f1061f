import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from popsize.rng import Rng, seed_state, seeded_rng

MASK = (1 << 64) - 1


def _reference_stream(seed, count):
    """Straight transcription of splitmix64 seeding plus xoshiro256**."""
    x = seed
    s = []
    for _ in range(4):
        x = (x + 0x9E3779B97F4A7C15) & MASK
        z = x
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        s.append(z ^ (z >> 31))

    def rotl(v, k):
        return ((v << k) | (v >> (64 - k))) & MASK

    out = []
    for _ in range(count):
        out.append((rotl((s[1] * 5) & MASK, 7) * 9) & MASK)
        t = (s[1] << 17) & MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = rotl(s[3], 45)
    return out


def test_known_answers_seed0():
    rng = Rng(0)
    assert [rng.next_u64() for _ in range(3)] == [
        11091344671253066420, 13793997310169335082, 1900383378846508768]


@pytest.mark.parametrize("seed", [0, 1, 42, 2**63 + 5, MASK])
def test_matches_reference_transcription(seed):
    assert [int(v) for v in Rng(seed).u64_array(200)] == _reference_stream(seed, 200)


def test_same_seed_same_stream():
    a = seeded_rng(0).u64_array(10**6)
    b = seeded_rng(0).u64_array(10**6)
    assert np.array_equal(a, b)


def test_different_seeds_differ_early():
    a = Rng(1).u64_array(64)
    b = Rng(2).u64_array(64)
    assert not np.array_equal(a, b)


def test_fair_bits():
    bits = Rng(42).bit_array(10**6)
    assert 0.497 <= bits.mean() <= 0.503


def test_bits_come_from_words_low_end_first():
    rng = Rng(9)
    word = int(Rng(9).next_u64())
    assert [rng.bit() for _ in range(64)] == [(word >> i) & 1 for i in range(64)]


def test_from_bits_scripts_exactly():
    rng = Rng.from_bits([0, 0, 1, 1])
    assert rng.buffered_bits == 4
    assert rng.geometric() == 3
    assert rng.geometric() == 1
    assert rng.buffered_bits == 0


def test_from_bits_rejects_long_scripts():
    with pytest.raises(ValueError):
        Rng.from_bits([0] * 65)


def test_seed_out_of_range():
    with pytest.raises(ValueError):
        seed_state(-1)
    with pytest.raises(ValueError):
        seed_state(1 << 64)


def test_integers_rejects_empty_range():
    with pytest.raises(ValueError):
        Rng(0).integers(0)


def test_uniform_floats_in_unit_interval():
    rng = Rng(3)
    xs = [rng.random() for _ in range(10_000)]
    assert min(xs) >= 0.0 and max(xs) < 1.0
    assert abs(np.mean(xs) - 0.5) < 0.015


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, MASK), m=st.integers(1, 2**62))
def test_integers_in_range(seed, m):
    arr = Rng(seed).integer_array(m, 50)
    assert arr.min() >= 0 and arr.max() < m


def test_integers_uniform_over_small_range():
    arr = Rng(5).integer_array(6, 600_000)
    counts = np.bincount(arr, minlength=6)
    expected = 100_000
    sigma = np.sqrt(expected * (1 - 1 / 6))
    assert np.all(np.abs(counts - expected) < 4 * sigma)
