"""Space-agnostic numeric primitives.

Divergence products, the four-point hyperbolicity defect, the angle-lemma
constant, and ambient angles.  Everything here is a pure function of
immutable inputs; sampled estimates shard by index.
"""

from __future__ import annotations

import math

import numpy as np

from . import spaces
from .seeding import stream


def gromov_product(x, y, w, space) -> float:
    """(d(x,w) + d(y,w) - d(x,y)) / 2, always in [0, min(d(x,w), d(y,w))]."""
    dxw = spaces.distance(space, x, w)
    dyw = spaces.distance(space, y, w)
    dxy = spaces.distance(space, x, y)
    return max(0.0, (dxw + dyw - dxy) / 2.0)


def products_from_distances(dxw, dyw, dxy):
    return np.maximum(0.0, (np.asarray(dxw) + np.asarray(dyw) - np.asarray(dxy)) / 2.0)


def four_point_defect(quad, space) -> float:
    """Smallest delta >= 0 such that the four-point condition holds for (x,y,z,w).

    Max over the three choices of middle point of (min of the two flanking
    products minus the skipping product), clipped below at zero.
    """
    x, y, z, w = quad
    for p in quad:
        spaces.require_member(space, p)
    pts = [x, y, z]
    d = spaces.distance_many(space, [w, w, w, x, y, x], [x, y, z, y, z, z])
    pxw, pyw, pzw = d[0], d[1], d[2]
    dxy, dyz, dxz = d[3], d[4], d[5]
    pxy = (pxw + pyw - dxy) / 2.0
    pyz = (pyw + pzw - dyz) / 2.0
    pxz = (pxw + pzw - dxz) / 2.0
    del pts
    defect = max(
        min(pxy, pyz) - pxz,  # middle y
        min(pxy, pxz) - pyz,  # middle x
        min(pxz, pyz) - pxy,  # middle z
    )
    return max(0.0, float(defect))


def delta_estimate(space, norm_range, n_samples: int, seed: int) -> float:
    """Sampled sup of the four-point defect over seeded quadruples."""
    if n_samples < 4:
        raise spaces.SpaceError("need at least 4 samples")
    best = 0.0
    for i in range(n_samples):
        quad = spaces.sample(space, int(stream(seed, i, 7).integers(0, 2**63 - 1)), norm_range, 4)
        best = max(best, four_point_defect(quad, space))
    return best


def angle_lemma_bound(alpha: float) -> float:
    """k(alpha) = 1 - sin(alpha/2): the guaranteed product fraction at angle <= alpha.

    Strictly positive, strictly decreasing on (0, pi), with limits 1 and 0.
    """
    if not (0.0 < alpha < math.pi):
        raise ValueError("alpha must lie strictly between 0 and pi")
    return 1.0 - math.sin(alpha / 2.0)


def ambient_angle(u, v) -> float:
    """arccos of the clamped normalized inner product; requires nonzero inputs."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu <= 0.0 or nv <= 0.0:
        raise ValueError("zero vector has no angle")
    return float(np.arccos(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0)))
