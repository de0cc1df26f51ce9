"""Seeded random streams.

One master seed is split into independent named streams (losses, delays,
one action stream per learner) so that different learners can be compared
on byte-identical environments.
"""
from __future__ import annotations

import zlib

import numpy as np


def stream(seed: int, name: str) -> np.random.Generator:
    """Return an independent generator derived from (seed, name).

    The name is hashed with CRC32, which is stable across platforms and
    Python processes (unlike the builtin hash).
    """
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(entropy=[int(seed), key]))


def sample_arm(dist: np.ndarray, u: float) -> int:
    """Inverse-CDF sampling of an arm index from a probability vector."""
    cdf = np.cumsum(dist)
    # Guard against cumulative rounding leaving cdf[-1] slightly below u.
    cdf[-1] = max(cdf[-1], 1.0)
    return int(np.searchsorted(cdf, u, side="right"))


class RngSampler:
    """Draws arms by consuming a generator sequentially."""

    def __init__(self, rng: np.random.Generator):
        self._rng = rng

    def draw(self, t: int, dist: np.ndarray) -> int:
        return sample_arm(dist, self._rng.random())


class TapeSampler:
    """Draws arms from a pre-drawn uniform tape indexed by round.

    Indexing by round (rather than consuming sequentially) makes two runs
    of the same learner consume identical noise even if their control flow
    differs, which is what the coupled lower-bound simulations need.
    """

    def __init__(self, tape: np.ndarray):
        self._tape = np.asarray(tape, dtype=float)

    def draw(self, t: int, dist: np.ndarray) -> int:
        return sample_arm(dist, float(self._tape[t - 1]))
