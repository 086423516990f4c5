"""Seed derivation and per-trial random streams.

Replication seeds come from a splitmix64 mixer so that the stream for
replication ``i`` of master seed ``s`` is reproducible on any platform
and independent of how replications are scheduled across workers::

    z = (s + (i + 1) * 0x9E3779B97F4A7C15) mod 2**64
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 mod 2**64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB mod 2**64
    seed = z ^ (z >> 31)

Inside a trial each concern (population, Stage 1, Stage 2, analysis,
recruitment, tokens) draws from its own numpy ``Generator`` keyed by
``SeedSequence([seed, stream_id])``. Stage 1 therefore sees identical
randomness whatever Stage-2 design is chosen (common random numbers).
"""
from __future__ import annotations

import enum

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(value: int) -> int:
    z = value & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def replication_seed(master_seed: int, index: int) -> int:
    """64-bit seed for replication ``index`` under ``master_seed``."""
    if index < 0:
        raise ValueError("replication index must be non-negative")
    return splitmix64((master_seed & MASK64) + (index + 1) * GOLDEN_GAMMA)


class Stream(enum.IntEnum):
    POPULATION = 0
    STAGE1 = 1
    STAGE2 = 2
    ANALYSIS = 3
    RECRUITMENT = 4
    TOKENS = 5


def stream(seed: int, which: Stream) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed & MASK64, int(which)]))
