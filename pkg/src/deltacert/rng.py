"""Counter-based random streams keyed by (root seed, purpose, index).

Every sample index gets its own Philox stream, so drawing sample ``i`` never
depends on how many other samples were drawn or in which worker.
"""
from __future__ import annotations

import numpy as np

# purpose tags keep streams for different jobs disjoint
SPHERE, ANNULUS, AUDIT, ISS_INIT, ISS_DIST, INVARIANCE, BARRIER, BARRIER_OUTER, PROBE, SIMULATE = range(10)


def stream(seed, *key):
    """Generator for the stream ``key`` under root ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
