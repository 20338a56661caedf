"""Seed derivation and generator construction.

All randomized operations in the package draw from a Philox counter-based
generator. Independent tasks (one sample, one simulated system, ...) get
their own stream derived from the master seed and a small integer path, so
results do not depend on the order in which tasks run.
"""

from __future__ import annotations

import numpy as np

SeedLike = int | np.random.SeedSequence


def derive(master_seed: int, *path: int) -> np.random.SeedSequence:
    """Derive an independent child seed from a master seed and a task path."""
    return np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(path))


def generator(seed: SeedLike) -> np.random.Generator:
    """Build the package-wide Philox generator for a seed or seed sequence."""
    if isinstance(seed, np.random.SeedSequence):
        seq = seed
    else:
        seq = np.random.SeedSequence(entropy=int(seed))
    return np.random.Generator(np.random.Philox(seq))
