"""Deterministic random streams.

All randomness in the toolkit goes through :func:`make_rng`, which wraps
numpy's counter-based Philox bit generator.  Philox output depends only on
(key, counter), so a seed yields the same stream on every platform.
"""
from __future__ import annotations

import numpy as np

SEED_MASK = (1 << 64) - 1


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Return a generator keyed by ``seed``; ``stream`` selects an
    independent substream for the same seed."""
    key = np.array([int(seed) & SEED_MASK, int(stream) & SEED_MASK], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def replication_seed(base_seed: int, replication: int) -> int:
    return (int(base_seed) + int(replication)) & SEED_MASK
