"""Named random substreams derived from a single integer seed.

Every stochastic stage (holdout split, anomaly synthesis, parameter search)
pulls its own named stream, so one seed pins the whole pipeline and parallel
scheduling cannot change results.
"""

from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """A generator unique to (seed, name), stable across platforms and runs."""
    tag = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed), tag]))
