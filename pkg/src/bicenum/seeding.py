"""Derived random streams.

Every stream is a PCG64 generator keyed by ``(master seed, *key)`` through
``numpy.random.SeedSequence``, so a stream depends only on its key and not
on how many other streams were drawn before it.
"""

import numpy as np


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


# key slot reserved for dataset draws; candidate fits use l >= 1
DATA_KEY = 0
