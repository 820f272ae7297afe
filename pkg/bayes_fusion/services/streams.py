"""
Deterministic random streams derived from one master seed.

Sub-batch k of a run draws from the k-th child of the master seed,
``SeedSequence(seed, spawn_key=(k,))``. The stream used for a sample depends
only on the seed and the sub-batch index, never on how many workers run, so a
run is reproducible from its seed alone.
"""

import numpy as np


def stream(seed: int, index: int) -> np.random.Generator:
    """Return the generator of sub-batch ``index`` under master ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))

