"""Deterministic per-replica random streams.

Every random quantity is drawn from a stream keyed by (seed, purpose,
replica index), so results do not depend on scheduling or worker count.
"""
from __future__ import annotations

import numpy as np

# purposes: distinct streams for distinct roles within one experiment
SIMULATION = 0
SEMIGROUP = 1
ORACLE = 2
SMALL_BALL = 3
AUX = 4


def replica_rng(seed: int, index: int = 0, purpose: int = SIMULATION) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(purpose), int(index)))
    return np.random.Generator(np.random.PCG64(ss))
