"""Deterministic random-stream derivation.

Every stochastic component draws from a Generator keyed by
(seed, *path integers, purpose tag).  Streams are independent by
construction (numpy SeedSequence), so bootstrap draws never alias data
draws and results do not depend on scheduling or worker count.
"""

import numpy as np

# purpose tags: fixed small integers, never reused across meanings
DATA = 0
BOOTSTRAP = 1
OPTIMIZER = 2
POPULATION = 3


def stream(seed, *path):
    """Return a Generator for the stream identified by ``(seed, *path)``.

    ``seed`` is the user-supplied 64-bit seed; ``path`` is a tuple of
    nonnegative integers (iteration index, replicate index, purpose tag).
    The same arguments always produce the same stream, on any platform
    and under any degree of parallelism.
    """
    entropy = (int(seed),) + tuple(int(p) for p in path)
    return np.random.default_rng(np.random.SeedSequence(entropy))
