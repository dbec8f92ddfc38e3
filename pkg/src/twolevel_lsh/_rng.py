"""Keyed, counter-style random streams.

Every random object in the package is drawn from a generator addressed by a
tuple of non-negative integers (master seed, stream tag, counters...).  The
same key always yields the same draws, so hash functions can be rebuilt from
their key alone and nothing depends on evaluation order.
"""

from __future__ import annotations

import numpy as np

# stream tags
PROJECTION = 1
GRID_SHIFT = 2
DIRECTION = 3
JL = 4
PROJECTED_MC = 5
TRIAL = 6
OUTER = 7
INNER = 8
PLANTED = 9
MINHASH = 10
QEST = 11
CLASSIC = 12
CALIBRATION = 13


def as_key(seed) -> tuple[int, ...]:
    if isinstance(seed, (tuple, list)):
        key = tuple(int(s) for s in seed)
    else:
        key = (int(seed),)
    if any(s < 0 for s in key):
        raise ValueError(f"seed material must be non-negative, got {key}")
    return key


def keyed_rng(*key: int) -> np.random.Generator:
    """Generator for the stream addressed by ``key``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key))))
