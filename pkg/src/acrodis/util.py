"""Seeded RNG streams shared by the training and sampling code.

Every source of randomness in the library draws from a named stream derived
from one user-facing seed, so that independent concerns (parameter init,
batch shuffling, dropout, masking) never consume from each other's sequence
and whole runs replay exactly.
"""

import numpy as np

# Stream identifiers.  Appending new ones is safe; renumbering breaks replay.
STREAM_INIT = 0
STREAM_BATCHES = 1
STREAM_DROPOUT = 2
STREAM_MASKING = 3
STREAM_SPLIT = 4
STREAM_REPORT = 5


def stream_rng(seed: int, *key: int) -> np.random.Generator:
    """Generator for the stream identified by ``key`` under ``seed``.

    Distinct keys give statistically independent streams; the same
    (seed, key) always gives the same sequence.
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(key)))
