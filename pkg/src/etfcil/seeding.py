"""Deterministic RNG derivation from a single 64-bit master seed.

Every consumer namespaces its spawn key with a leading domain id (0 ETF
rotation, 1 synthetic data, 2 model training, 3 layer-peeled init, 4 CLI
pipeline draws) so that one master seed can drive all of them without any
stream being reused across domains.
"""

import numpy as np


def spawn_rng(seed: int, *key: int) -> np.random.Generator:
    """Child generator for (seed, *key); identical arguments give identical streams."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))
