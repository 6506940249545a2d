"""Deterministic rng streams derived from (global seed, stream indices)."""

from __future__ import annotations

import numpy as np


def derived_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for a given seed and stream-index path.

    Streams with different index paths are statistically independent, so
    parallel workers can draw from derived_rng(seed, worker, item) without
    coordinating.
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(stream)))
