"""Deterministic 64-bit random streams shared by the compiled and pure-Python cores.

Both backends draw from xoshiro256** seeded through splitmix64, so a given
(master_seed, replica_index) pair yields the same numbers everywhere.
"""
from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_TWO_M53 = 2.0 ** -53


def mix64(x: int) -> int:
    """splitmix64 finalizer."""
    z = x & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def child_seed(master_seed: int, index: int) -> int:
    """Seed of replica ``index``: H(master, i) = mix64(mix64(master) + (i+1)*GOLDEN)."""
    return mix64((mix64(master_seed) + (index + 1) * GOLDEN) & MASK64)


def seed_state(seed: int) -> list[int]:
    x = seed & MASK64
    out = []
    for _ in range(4):
        x = (x + GOLDEN) & MASK64
        out.append(mix64(x))
    return out


def next_u64(s: list[int]) -> int:
    s0, s1, s2, s3 = s
    r = (s1 * 5) & MASK64
    r = (((r << 7) | (r >> 57)) & MASK64) * 9 & MASK64
    t = (s1 << 17) & MASK64
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = ((s3 << 45) | (s3 >> 19)) & MASK64
    s[0], s[1], s[2], s[3] = s0, s1, s2, s3
    return r


def next_double(s: list[int]) -> float:
    return (next_u64(s) >> 11) * _TWO_M53


class Stream:
    """A single-owner random stream. Never share one between threads."""

    def __init__(self, seed: int = 0):
        self.seed = int(seed) & MASK64
        self._s = seed_state(self.seed)

    @classmethod
    def for_replica(cls, master_seed: int, index: int) -> Stream:
        return cls(child_seed(master_seed, index))

    def random(self) -> float:
        return next_double(self._s)

    def exponential(self, rate: float) -> float:
        return -math.log(1.0 - next_double(self._s)) / rate

    def integer(self, n: int) -> int:
        k = int(next_double(self._s) * n)
        return k if k < n else n - 1

    def copy(self) -> Stream:
        other = Stream.__new__(Stream)
        other.seed = self.seed
        other._s = list(self._s)
        return other

    # compiled kernels advance the state in place through this array view
    def state_array(self) -> np.ndarray:
        return np.array(self._s, dtype=np.uint64)

    def load_state(self, arr: np.ndarray) -> None:
        self._s = [int(v) for v in arr]
