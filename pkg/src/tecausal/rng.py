"""Hierarchical seeded random streams.

Every stochastic operation draws from a named substream of one master
seed, so adding environments / time steps / trials never perturbs draws
made by unrelated parts of a run.
"""

import zlib

import numpy as np


def _key(parts):
    out = []
    for p in parts:
        if isinstance(p, (int, np.integer)):
            out.append(int(p) & 0xFFFFFFFF)
        else:
            out.append(zlib.crc32(str(p).encode()))
    return tuple(out)


def substream(master_seed, *parts):
    """Return a Generator for the substream named by ``parts``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=_key(parts))
    return np.random.default_rng(ss)
