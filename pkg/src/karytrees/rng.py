"""Deterministic random-stream derivation.

Every stochastic routine takes an explicit ``numpy.random.Generator``.  For
replicated experiments, streams are derived from ``(seed, purpose, index)``
so that replicate ``i`` sees the same draws no matter how many replicates
run, in what order, or on how many workers.
"""

from __future__ import annotations

import numpy as np

# purpose tags for derived streams
REPLICATE = 0
TARGET = 1
AUXILIARY = 2


def stream(seed: int, purpose: int, index: int) -> np.random.Generator:
    """Generator for one (seed, purpose, index) triple."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(purpose), int(index)))
    return np.random.Generator(np.random.PCG64(ss))


def replicate_stream(seed: int, replicate: int) -> np.random.Generator:
    """Stream feeding one Monte Carlo replicate; independent across indices."""
    return stream(seed, REPLICATE, replicate)
