"""SplitMix64 mixing, shared by the PUF model and trial seeding.

``child_seed(master, t)`` is the ``t``-th output (0-based) of a SplitMix64
generator seeded with ``master``::

    state = master + (t + 1) * 0x9E3779B97F4A7C15   (mod 2**64)
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z = z ^ (z >> 31)

Any implementation following these lines reproduces the per-trial seeds (and
therefore the per-trial PUF devices and challenges) bit for bit.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GAMMA = np.uint64(GAMMA)


def mix64(z) -> np.ndarray:
    """SplitMix64 finaliser, elementwise on uint64 arrays (wrapping arithmetic)."""
    z = np.atleast_1d(np.asarray(z, dtype=np.uint64)).copy()
    z ^= z >> np.uint64(30)
    z *= _M1
    z ^= z >> np.uint64(27)
    z *= _M2
    z ^= z >> np.uint64(31)
    return z


def stream(seed, index) -> np.ndarray:
    """``index``-th SplitMix64 output for ``seed`` (both broadcast as uint64)."""
    seed = np.atleast_1d(np.asarray(seed, dtype=np.uint64))
    index = np.atleast_1d(np.asarray(index, dtype=np.uint64))
    return mix64(seed + (index + np.uint64(1)) * _GAMMA)


def child_seed(master: int, trial) -> np.ndarray:
    return stream(np.uint64(master & MASK64), trial)


def to_unit(h) -> np.ndarray:
    """Top 53 bits of a uint64 hash as a float in [0, 1)."""
    return (np.asarray(h, dtype=np.uint64) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
