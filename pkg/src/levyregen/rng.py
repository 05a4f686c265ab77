"""Seed fan-out for reproducible, order-independent simulation.

Every random object in the package is drawn from a Philox (counter-based)
generator whose key is a stable hash of a master seed and a tuple of
integer indices, so path ``i`` of a batch never depends on how many paths
were drawn before it.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# stream tags keep independent uses of one master seed apart
STREAM_DIRECT = 1
STREAM_REGEN = 2
STREAM_PILOT = 3
STREAM_FRESH = 4
STREAM_KILL = 5
STREAM_SPLICE = 6
STREAM_AUX = 7


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= _MASK64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def derive_seed(master: int, *keys: int) -> int:
    """Hash ``(master, *keys)`` to a 64-bit seed.

    The hash is numpy's ``SeedSequence`` entropy mixing, which is stable
    across platforms and numpy releases.
    """
    entropy = [check_seed(master), *(check_seed(k) for k in keys)]
    state = np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)
    return int(state[0])


def generator(seed: int) -> np.random.Generator:
    """Counter-based generator keyed by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(key=check_seed(seed)))
