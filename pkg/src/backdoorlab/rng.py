"""Deterministic 64-bit random streams.

Every stochastic choice in the package (weight init, epoch shuffles, poison
sample selection, parameter noise) draws from a `Rng`, so a run is fully
reproducible from its 64-bit seed on any platform.  The generator is
xoshiro256** with its state seeded by a splitmix64 chain, both implemented
directly on Python integers masked to 64 bits.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_INV_2_53 = 1.0 / (1 << 53)


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; returns (next_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


def derive_seed(seed: int, label: str) -> int:
    """Derive an independent stream seed from a base seed and a purpose label."""
    _, mixed = splitmix64((seed ^ _fnv1a64(label)) & _MASK64)
    return mixed


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Rng:
    """xoshiro256** generator seeded via splitmix64."""

    def __init__(self, seed: int):
        state = seed & _MASK64
        words = []
        for _ in range(4):
            state, word = splitmix64(state)
            words.append(word)
        if not any(words):  # all-zero state would be absorbing
            words[0] = 1
        self._s = words

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s[1] << 17) & _MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def random(self) -> float:
        """Uniform float64 in [0, 1), from the top 53 bits."""
        return (self.next_u64() >> 11) * _INV_2_53

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def uniforms(self, n: int) -> np.ndarray:
        """n uniform float64 samples in [0, 1)."""
        draw = self.next_u64
        return np.array([(draw() >> 11) * _INV_2_53 for _ in range(n)], dtype=np.float64)

    def normals(self, n: int) -> np.ndarray:
        """n standard-normal samples via Box-Muller on consecutive uniform pairs."""
        pairs = (n + 1) // 2
        u = self.uniforms(2 * pairs)
        r = np.sqrt(-2.0 * np.log(1.0 - u[0::2]))  # 1-u in (0,1], log finite
        theta = (2.0 * math.pi) * u[1::2]
        out = np.empty(2 * pairs, dtype=np.float64)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n]

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) without modulo bias (rejection sampling)."""
        if n <= 0:
            raise ValueError(f"below() needs n >= 1, got {n}")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def shuffle(self, items: np.ndarray) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> np.ndarray:
        out = np.arange(n, dtype=np.int64)
        self.shuffle(out)
        return out

    def sample(self, n: int, k: int) -> np.ndarray:
        """k distinct indices drawn from [0, n), in shuffled order."""
        if k > n:
            raise ValueError(f"cannot sample {k} distinct values from {n}")
        return self.permutation(n)[:k]
