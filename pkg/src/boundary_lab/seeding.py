"""Deterministic random streams.

Splitting rule: every sampled object (point, quadruple, triangle, ...) gets
its own generator derived from ``SeedSequence(seed, spawn_key=key)`` where
``key`` is the object's index path.  Results are therefore independent of
batching and worker count: shard however you like, merge by index.
"""

import numpy as np


def stream(seed: int, *key: int) -> np.random.Generator:
    """Child generator for (seed, key)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)


def unit_vector(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Uniform direction on the unit sphere of ``dim`` coordinates."""
    if dim == 1:
        return np.array([1.0 if rng.random() < 0.5 else -1.0])
    v = rng.standard_normal(dim)
    n = np.linalg.norm(v)
    while n < 1e-12:
        v = rng.standard_normal(dim)
        n = np.linalg.norm(v)
    return v / n
