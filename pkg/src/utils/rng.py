"""
Seeded random streams.

Every replication gets its own PCG64 generator seeded from
SeedSequence([master_seed, rep_index]), so results do not depend on how
replications are scheduled across workers.
"""

import numpy as np
from scipy.special import ndtri


def stream(seed, *keys):
    """Generator for the entropy tuple (seed, *keys)."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, *(int(k) for k in keys)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def uniforms(rng, size):
    """Uniforms on the open interval (0, 1)."""
    u = rng.random(size)
    return np.where(u == 0.0, np.nextafter(0.0, 1.0), u)


def normals(rng, size, loc=0.0, scale=1.0):
    """Normals by inverse CDF of uniforms."""
    return loc + scale * ndtri(uniforms(rng, size))
