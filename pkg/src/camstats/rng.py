"""Deterministic pseudo-random numbers for resampling and shuffling.

A splitmix64 stream seeds a xoshiro256** generator.  Both are fixed-width
64-bit integer recurrences, so every draw is reproducible across platforms
and Python versions, unlike a float-based RNG.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state once; returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def derive_seed(base: int, *indices: int) -> int:
    """Fold indices into a base seed, one splitmix64 step per index.

    Used to hand out independent sub-seeds (per scenario, per resample)
    without any draw-order coupling between consumers.
    """
    state = base & _MASK
    for idx in indices:
        state, _ = splitmix64((state + idx) & _MASK)
    return state


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK


class Xoshiro256StarStar:
    """xoshiro256** generator, state seeded from a splitmix64 stream."""

    def __init__(self, seed: int):
        state = seed & _MASK
        s = []
        for _ in range(4):
            state, out = splitmix64(state)
            s.append(out)
        self._s = s

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & _MASK, 7) * 9) & _MASK
        t = (s[1] << 17) & _MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def next_below(self, n: int) -> int:
        """Uniform-ish integer in [0, n); modulo bias is negligible for n << 2^64."""
        if n <= 0:
            raise ValueError("n must be positive")
        return self.next_u64() % n

    def next_float(self) -> float:
        """Uniform float in [0, 1) using the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.next_below(i + 1)
            items[i], items[j] = items[j], items[i]
