"""Deterministic counter-based random streams.

Every stochastic component draws from a Generator keyed by (seed, stream id),
so replicas and experiment stages are reproducible independently of execution
order.  Philox is used where a raw counter is needed (bridge constructions);
SeedSequence spawn keys cover the common case.
"""

import numpy as np


def stream(seed, stream_id=0):
    """Generator for the given (seed, stream) pair, independent across streams."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.PCG64(ss))


def counter_stream(seed, stream_id, counter):
    """Generator whose draws depend only on (seed, stream, counter).

    Used by the dyadic bridge sampler: the value attached to a tree node must
    not depend on the order in which nodes are realised.
    """
    bg = np.random.Philox(key=(int(seed) & (2**64 - 1), int(stream_id) & (2**64 - 1)),
                          counter=(int(counter) & (2**64 - 1), 0, 0, 0))
    return np.random.Generator(bg)
