"""Deterministic random-stream derivation.

Every unit of concurrent work (a chain, a grid cell, a replicate) owns its
own counter-based Philox stream, derived from a root seed and an integer
path. Streams with distinct paths never overlap, and the derivation does
not depend on the order in which streams are created, so results are
reproducible at any parallelism degree.
"""

from __future__ import annotations

import numpy as np

_SEED_MASK = (1 << 64) - 1


def substream(seed: int, *path: int) -> np.random.Generator:
    """Return the Philox generator identified by ``(seed, *path)``.

    The same ``(seed, path)`` always yields the same stream; distinct paths
    yield statistically independent streams.
    """
    ss = np.random.SeedSequence(entropy=int(seed) & _SEED_MASK,
                                spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))
