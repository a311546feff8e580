"""Counter-based random substreams keyed on (master seed, trajectory index).

A trajectory's randomness depends only on its key, never on which worker
draws it or in what order, which is what makes reports reproducible across
worker counts.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1

# stream ids; each purpose gets its own Philox key so draws never overlap
WALK = 0
REPLACEMENT = 1
GREEN = 2
PILOT = 3
COUPLING = 4


def substream(master_seed: int, index: int, stream: int = WALK) -> np.random.Generator:
    if master_seed < 0 or index < 0:
        raise ValueError("seeds and indices must be non-negative")
    if index >= 1 << 48 or stream >= 1 << 16:
        raise ValueError("trajectory index or stream id too large")
    key = ((master_seed & MASK64) << 64) | (stream << 48) | index
    return np.random.Generator(np.random.Philox(key=key))
