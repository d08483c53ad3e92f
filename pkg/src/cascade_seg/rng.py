"""Seeded random streams.

All randomness goes through ``numpy.random.Generator`` over PCG64. Phantom
sample k uses ``SeedSequence([seed, k])``; a training run spawns independent
child streams from ``SeedSequence([seed, key])``. The bit generator is part of
the reproducibility contract: changing it changes every dataset and checkpoint.
"""

from typing import NamedTuple

import numpy as np


class TrainingStreams(NamedTuple):
    init: np.random.Generator
    shuffle: np.random.Generator
    dropout: np.random.Generator


def generator(seed: int, *keys: int) -> np.random.Generator:
    """Independent PCG64 stream for (seed, *keys)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *keys])))


def training_streams(seed: int, key: int = 0) -> TrainingStreams:
    """Init, shuffle and dropout streams for network ``key`` of a run."""
    children = np.random.SeedSequence([seed, key]).spawn(3)
    return TrainingStreams(*(np.random.Generator(np.random.PCG64(c)) for c in children))
