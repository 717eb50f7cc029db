"""Keyed pseudorandom streams used for placement and library contents.

Everything random in the simulator is derived from SplitMix64 so that a
placement can be replayed bit-for-bit from its seed, in any language:

* ``derive_key(a, b, c, ...)`` folds integers into one 64-bit key:
  ``h = 0; for p in parts: h = splitmix64(h ^ p)``.
* ``stream(key, n)`` is the standard SplitMix64 output sequence seeded with
  ``key``: element ``i`` is ``mix(key + (i + 1) * 0x9E3779B97F4A7C15)``.
* ``select(key, n, quota)`` caches the ``quota`` bit indices with the smallest
  ``stream(key, n)`` values (ties broken by index), returned sorted. Ranking by
  iid keys is a uniformly random subset, i.e. a keyed shuffle truncated to the
  first ``quota`` entries.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def splitmix64(x: int) -> int:
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def derive_key(*parts: int) -> int:
    h = 0
    for p in parts:
        h = splitmix64(h ^ (int(p) & MASK64))
    return h


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def stream(key: int, n: int) -> np.ndarray:
    """First ``n`` SplitMix64 outputs for state ``key`` as uint64."""
    steps = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(GOLDEN)
    return _mix(steps + np.uint64(key & MASK64))


def random_bits(key: int, n: int) -> np.ndarray:
    """``n`` bits (uint8 0/1), the top bit of each stream word."""
    return (stream(key, n) >> np.uint64(63)).astype(np.uint8)


def select(key: int, n: int, quota: int) -> np.ndarray:
    if not 0 <= quota <= n:
        raise ValueError(f"quota {quota} outside [0, {n}]")
    if quota == 0:
        return np.empty(0, dtype=np.int64)
    order = np.argsort(stream(key, n), kind="stable")
    return np.sort(order[:quota])


def generator(key: int) -> np.random.Generator:
    """numpy Generator for incidental draws (departures, test instances)."""
    return np.random.default_rng(key & MASK64)
