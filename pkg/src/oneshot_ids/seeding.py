"""Named deterministic RNG streams derived from one experiment seed.

Every stochastic stage (splitting, weight init, pair sampling, evaluation)
draws from its own child stream so that changing e.g. the number of epochs
cannot perturb the split.
"""

from __future__ import annotations

import numpy as np

SPLIT_STREAM = 0
INIT_STREAM = 1
PAIR_STREAM = 2
EVAL_STREAM = 3


def stream_rng(seed: int, stream: int, *extra: int) -> np.random.Generator:
    """Generator for (seed, stream[, extra...]); stable across runs."""
    return np.random.default_rng(np.random.SeedSequence((seed, stream, *extra)))
