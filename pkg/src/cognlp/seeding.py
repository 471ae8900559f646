"""Named, schedule-independent random streams.

Every stochastic component draws from its own stream derived from the run
seed plus a string label, so adding a consumer never shifts the draws of
another and parallel execution cannot reorder them.
"""

from __future__ import annotations

import zlib

import numpy as np


def stream(seed: int, *labels: str | int) -> np.random.Generator:
    """Return a generator keyed by ``(seed, *labels)``."""
    entropy = [int(seed) & 0xFFFFFFFF]
    for label in labels:
        if isinstance(label, int):
            entropy.append(label & 0xFFFFFFFF)
        else:
            entropy.append(zlib.crc32(str(label).encode("utf-8")))
    return np.random.default_rng(np.random.SeedSequence(entropy))
