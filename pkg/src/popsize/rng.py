"""Portable seeded random source shared by every simulation kernel.

The generator is xoshiro256** seeded through splitmix64. Its whole state lives
in a small ``uint64`` array so numba kernels can take it by reference:

    state[0:4]  xoshiro256** words
    state[4]    buffered bits not yet handed out by :func:`next_bit`
    state[5]    number of valid bits left in state[4]

Fair bits are peeled off one at a time from the low end of a 64-bit word, so
a geometric variable costs its number of flips in bits, not one word each.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_MASK64 = (1 << 64) - 1
STATE_SIZE = 6


def _splitmix64(x: int) -> tuple[int, int]:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x, z ^ (z >> 31)


def seed_state(seed: int) -> np.ndarray:
    """Expand a 64-bit seed into a fresh generator state array."""
    if not 0 <= seed <= _MASK64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    words = []
    x = seed
    for _ in range(4):
        x, z = _splitmix64(x)
        words.append(z)
    return np.array(words + [0, 0], dtype=np.uint64)


@njit(inline="always")
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@njit(nogil=True, cache=True)
def next_u64(state):
    s0 = state[0]
    s1 = state[1]
    s2 = state[2]
    s3 = state[3]
    result = _rotl(s1 * np.uint64(5), 7) * np.uint64(9)
    t = s1 << np.uint64(17)
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, 45)
    state[0] = s0
    state[1] = s1
    state[2] = s2
    state[3] = s3
    return result


@njit(nogil=True, cache=True)
def next_bit(state):
    if state[5] == np.uint64(0):
        state[4] = next_u64(state)
        state[5] = np.uint64(64)
    bit = state[4] & np.uint64(1)
    state[4] = state[4] >> np.uint64(1)
    state[5] = state[5] - np.uint64(1)
    return np.int64(bit)


@njit(nogil=True, cache=True)
def uniform_below(state, m):
    """Uniform integer in [0, m) by masked rejection on the high bits."""
    if m <= 1:
        return np.int64(0)
    top = np.int64(m - 1)
    bits = 0
    while top > 0:
        bits += 1
        top >>= 1
    shift = np.uint64(64 - bits)
    bound = np.uint64(m)
    while True:
        x = next_u64(state) >> shift
        if x < bound:
            return np.int64(x)


@njit(nogil=True, cache=True)
def next_float(state):
    return np.float64(next_u64(state) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(nogil=True, cache=True)
def geometric_half(state):
    """Fair-coin flips up to and including the first head (head = bit 1)."""
    g = np.int64(1)
    while next_bit(state) == 0:
        g += 1
    return g


@njit(nogil=True, cache=True)
def geometric(state, p):
    if p == 0.5:
        return geometric_half(state)
    g = np.int64(1)
    while next_float(state) >= p:
        g += 1
    return g


@njit(nogil=True, cache=True)
def fill_u64(state, out):
    for i in range(out.shape[0]):
        out[i] = next_u64(state)


@njit(nogil=True, cache=True)
def fill_bits(state, out):
    for i in range(out.shape[0]):
        out[i] = next_bit(state)


@njit(nogil=True, cache=True)
def fill_below(state, m, out):
    for i in range(out.shape[0]):
        out[i] = uniform_below(state, m)


class Rng:
    """Deterministic generator handle; equal seeds give equal streams everywhere.

    One ``Rng`` belongs to one run. It may be handed to another thread but must
    not be shared between concurrently running kernels.
    """

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self.state = seed_state(self.seed)

    @classmethod
    def from_bits(cls, bits) -> "Rng":
        """A generator whose next fair bits are exactly ``bits`` (at most 64).

        Later draws fall back to the seed-0 stream. Used to script coin
        outcomes when enumerating protocol behaviour.
        """
        bits = list(bits)
        if len(bits) > 64:
            raise ValueError("at most 64 scripted bits")
        rng = cls(0)
        word = 0
        for i, b in enumerate(bits):
            word |= (int(b) & 1) << i
        rng.state[4] = np.uint64(word)
        rng.state[5] = np.uint64(len(bits))
        return rng

    @property
    def buffered_bits(self) -> int:
        return int(self.state[5])

    def next_u64(self) -> int:
        return int(next_u64(self.state))

    def bit(self) -> int:
        return int(next_bit(self.state))

    def integers(self, m: int) -> int:
        """Uniform integer in ``[0, m)``."""
        if m < 1:
            raise ValueError(f"m must be positive, got {m}")
        return int(uniform_below(self.state, m))

    def random(self) -> float:
        return float(next_float(self.state))

    def geometric(self, p: float = 0.5) -> int:
        return int(geometric(self.state, float(p)))

    def u64_array(self, count: int) -> np.ndarray:
        out = np.empty(count, dtype=np.uint64)
        fill_u64(self.state, out)
        return out

    def bit_array(self, count: int) -> np.ndarray:
        out = np.empty(count, dtype=np.int64)
        fill_bits(self.state, out)
        return out

    def integer_array(self, m: int, count: int) -> np.ndarray:
        out = np.empty(count, dtype=np.int64)
        fill_below(self.state, m, out)
        return out


def seeded_rng(seed: int) -> Rng:
    return Rng(seed)
