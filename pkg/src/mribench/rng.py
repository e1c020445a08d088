"""Portable deterministic pseudo-random generator.

Clustering seeding must be bit-for-bit reproducible across platforms, so the
relevant randomness comes from an xorshift64* stream implemented with plain
Python integers instead of any library generator.

Constants (all fixed, never change without a version bump):

  xorshift64*   shifts 12, 25, 27; multiplier 0x2545F4914F6CDD1D
  splitmix64    increment 0x9E3779B97F4A7C15,
                mixers    0xBF58476D1CE4E5B9 and 0x94D049BB133111EB
                (used once, to expand the user seed into a nonzero state)

Doubles are drawn as next_u64() >> 11 scaled by 2**-53, uniform in [0, 1).
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1
_SPLITMIX_INC = 0x9E3779B97F4A7C15
_SPLITMIX_MIX1 = 0xBF58476D1CE4E5B9
_SPLITMIX_MIX2 = 0x94D049BB133111EB
_XS_MULT = 0x2545F4914F6CDD1D


def _splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: returns (new_state, output)."""
    state = (state + _SPLITMIX_INC) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * _SPLITMIX_MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _SPLITMIX_MIX2) & _MASK64
    return state, z ^ (z >> 31)


def derive_seed(seed: int, stream: int) -> int:
    """Decorrelated child seed for stream `stream` of a master seed.

    Used to give each slice/repeat its own deterministic stream regardless
    of evaluation order or parallelism.
    """
    state, a = _splitmix64(seed & _MASK64)
    state = (state ^ (stream & _MASK64)) & _MASK64
    _, b = _splitmix64(state)
    return (a ^ b) & _MASK64


class Xorshift64Star:
    """xorshift64* stream; state seeded through splitmix64 so seed 0 is valid."""

    def __init__(self, seed: int):
        _, state = _splitmix64(seed & _MASK64)
        self._state = state if state != 0 else _XS_MULT

    def next_u64(self) -> int:
        x = self._state
        x ^= (x >> 12)
        x ^= (x << 25) & _MASK64
        x ^= (x >> 27)
        self._state = x
        return (x * _XS_MULT) & _MASK64

    def uniform(self) -> float:
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * 2.0**-53

    def randint(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = ((1 << 64) // n) * n
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]
