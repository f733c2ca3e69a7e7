"""Deterministic counter-based random numbers.

All fixture randomness in this package flows through one fully specified
generator so that seeded runs are byte-identical across platforms and
Python/numpy versions.  The primitive is the splitmix64 finalizer
(Steele, Lea & Flood; constants as in Vigna's reference implementation)
evaluated at ``key + (counter+1) * GAMMA``:

    z  = key + (i + 1) * 0x9E3779B97F4A7C15            (mod 2^64)
    z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9             (mod 2^64)
    z ^= z >> 27;  z *= 0x94D049BB133111EB             (mod 2^64)
    out = z ^ (z >> 31)

Uniform doubles take the top 53 bits: (out >> 11) * 2^-53.  Normals are
Box-Muller over two uniforms.  Streams are split by hashing extra ids
into the key, so parallel consumers keyed by (run seed, item id) are
order-independent.
"""

from __future__ import annotations

import math

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _finalize(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


_MASK = 0xFFFFFFFFFFFFFFFF


def _fold(key: int, word: int) -> int:
    # Mix one 64-bit word into the key (used for splitting streams).
    # Same finalizer as _finalize, in plain ints to avoid numpy scalar
    # overflow warnings.
    z = ((key ^ word) + int(_GAMMA)) & _MASK
    z = ((z ^ (z >> 30)) * int(_MIX1)) & _MASK
    z = ((z ^ (z >> 27)) * int(_MIX2)) & _MASK
    return z ^ (z >> 31)


def fold_string(key: int, text: str) -> int:
    """Derive a subkey from a string id (for per-item RNG streams)."""
    k = key
    for b in text.encode("utf-8"):
        k = _fold(k, b)
    return _fold(k, len(text))


class CounterRng:
    """Splittable keyed generator; draws advance an internal counter."""

    def __init__(self, key: int):
        self._key = np.uint64(key & 0xFFFFFFFFFFFFFFFF)
        self._counter = 0

    @classmethod
    def from_seeds(cls, *seeds: int) -> "CounterRng":
        key = 0x243F6A8885A308D3  # pi fractional bits, an arbitrary fixed base
        for s in seeds:
            key = _fold(key, int(s))
        return cls(key)

    def split(self, *ids: int) -> "CounterRng":
        key = int(self._key)
        for i in ids:
            key = _fold(key, int(i))
        return CounterRng(key)

    def split_label(self, label: str) -> "CounterRng":
        return CounterRng(fold_string(int(self._key), label))

    def uint64(self, n: int) -> np.ndarray:
        start = self._counter
        self._counter += n
        counters = np.arange(start + 1, start + n + 1, dtype=np.uint64)
        return _finalize(self._key + counters * _GAMMA)

    def uniform(self, n: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        u = (self.uint64(n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        return lo + (hi - lo) * u

    def normal(self, n: int) -> np.ndarray:
        m = (n + 1) // 2
        # u1 in (0, 1] so the log is finite.
        u1 = ((self.uint64(m) >> np.uint64(11)).astype(np.float64) + 1.0) * (2.0 ** -53)
        u2 = (self.uint64(m) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * math.pi * u2
        out = np.concatenate([r * np.cos(theta), r * np.sin(theta)])
        return out[:n]

    def permutation(self, n: int) -> np.ndarray:
        # argsort of 64-bit keys; ties are impossible in practice.
        return np.argsort(self.uint64(n), kind="stable")
