import numpy as np


def keyed_rng(seed: int, *key: int) -> np.random.Generator:
    """
    Counter-style generator for (seed, key...): the stream depends only on the
    key, never on how many other streams were created before it.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))
