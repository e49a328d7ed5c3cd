"""Exact saucer distances via gate-waypoint reduction.

A path between saucer points whose chord is infeasible must cross each
integer radius level j between the endpoint radii, and at the last upward
crossing of level j all coordinates up to j vanish.  Consequently the
induced distance equals the minimum of

    |s - w_a| + sum_j |w_j - w_{j+1}| + |w_b - t|

over gate points ``w_j`` in the convex sets
``C_j = { w : w_i = 0 for i <= j, |w| <= j }`` with ``a = ceil(r_s)`` and
``b = ceil(r_t) - 1`` (radii sorted so r_s <= r_t); every such route is a
feasible path, and conversely any path dominates its own chain of last
crossings.  The minimization is a small convex problem solved by
Gauss-Seidel sweeps with a projected Weiszfeld update per gate.  The same
reduction holds for the warped metric on the hyperboloid with radius t and
geodesic segments.
"""

from __future__ import annotations

import math

import numpy as np

EPS = 1e-300


def _gate_index_range(r_lo: float, r_hi: float):
    a = max(1, math.ceil(r_lo - 1e-9))
    b = math.ceil(r_hi - 1e-9) - 1
    return a, b


# ---------------------------------------------------------------------------
# Flat saucer


def _flat_route_length(s, t, W):
    """s,t: (B,d); W: (B,G,d) waypoints. Total chord length per row."""
    pts = np.concatenate([s[:, None, :], W, t[:, None, :]], axis=1)
    return np.sum(np.linalg.norm(np.diff(pts, axis=1), axis=-1), axis=-1)


def _flat_gate_project(W, gate_idx, radii):
    """Project onto C_j: zero coordinates <= j, clamp norm to j."""
    d = W.shape[-1]
    mask = np.arange(d)[None, None, :] >= gate_idx[None, :, None]
    Z = np.where(mask, W, 0.0)
    n = np.linalg.norm(Z, axis=-1, keepdims=True)
    scale = np.where(n > radii[None, :, None], radii[None, :, None] / np.maximum(n, EPS), 1.0)
    return Z * scale


def _solve_flat_group(s, t, gates, max_disk, sweeps=60, inner=8, tol=1e-13):
    """All rows share the same gate index list ``gates``."""
    B, d = s.shape
    G = len(gates)
    gate_idx = np.asarray(gates)          # zero coords <= j: 0-based indices < j
    radii = np.minimum(np.asarray(gates, dtype=float), float(max_disk))
    # init: radial interpolation toward the deeper endpoint's direction
    rs = np.linalg.norm(s, axis=-1, keepdims=True)
    rt = np.linalg.norm(t, axis=-1, keepdims=True)
    that = t / np.maximum(rt, EPS)
    W = np.stack([that * min(float(g), max_disk) for g in gates], axis=1)
    W = _flat_gate_project(W, gate_idx, radii)
    prev = _flat_route_length(s, t, W)
    for sweep in range(sweeps):
        order = range(G) if sweep % 2 == 0 else range(G - 1, -1, -1)
        for gi in order:
            u = s if gi == 0 else W[:, gi - 1]
            v = t if gi == G - 1 else W[:, gi + 1]
            w = W[:, gi]
            for _ in range(inner):
                du = np.linalg.norm(w - u, axis=-1, keepdims=True)
                dv = np.linalg.norm(w - v, axis=-1, keepdims=True)
                du = np.maximum(du, 1e-14)
                dv = np.maximum(dv, 1e-14)
                w_new = (u / du + v / dv) / (1.0 / du + 1.0 / dv)
                w = _flat_gate_project(w_new[:, None, :], gate_idx[gi : gi + 1], radii[gi : gi + 1])[:, 0]
            W[:, gi] = w
        cur = _flat_route_length(s, t, W)
        if np.all(prev - cur <= tol * np.maximum(cur, 1.0)):
            prev = cur
            break
        prev = cur
    return prev, W


def flat_distance(space, X, Y, return_waypoints: bool = False):
    """Exact induced distances for flat-saucer pairs whose chord is infeasible.

    X, Y: (B, d) member points.  Returns lengths (and per-pair waypoint
    lists when requested)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    B = X.shape[0]
    rx = np.linalg.norm(X, axis=-1)
    ry = np.linalg.norm(Y, axis=-1)
    out = np.empty(B)
    ways: list = [None] * B
    groups: dict = {}
    for i in range(B):
        s, t = (X[i], Y[i]) if rx[i] <= ry[i] else (Y[i], X[i])
        a, b = _gate_index_range(min(rx[i], ry[i]), max(rx[i], ry[i]))
        if a > b:
            out[i] = float(np.linalg.norm(X[i] - Y[i]))
            ways[i] = []
            continue
        groups.setdefault((a, b), []).append((i, s, t))
    for (a, b), rows in groups.items():
        gates = list(range(a, b + 1))
        s = np.stack([r[1] for r in rows])
        t = np.stack([r[2] for r in rows])
        lens, W = _solve_flat_group(s, t, gates, space.max_disk)
        for k, (i, _, _) in enumerate(rows):
            out[i] = lens[k]
            if return_waypoints:
                pts = [W[k, g] for g in range(len(gates))]
                if rx[i] > ry[i]:
                    pts = pts[::-1]
                ways[i] = pts
    if return_waypoints:
        return out, ways
    return out


# ---------------------------------------------------------------------------
# Warped saucer (hyperboloid model)


def _h_dist(P, Q):
    dp = P - Q
    w = np.maximum(0.5 * (np.sum(dp[..., 1:] ** 2, axis=-1) - dp[..., 0] ** 2), 0.0)
    return np.log1p(w + np.sqrt(w * (w + 2.0)))


def _h_route_length(s, t, W):
    pts = np.concatenate([s[:, None, :], W, t[:, None, :]], axis=1)
    return np.sum(_h_dist(pts[:, :-1], pts[:, 1:]), axis=-1)


def _h_gate_project(P, gate_idx, radii_sinh):
    """Project onto the hyperboloid gate: zero spatial coords <= j, clamp
    the spatial norm to sinh(min(j, max_disk)), restore the time component."""
    v = P[..., 1:]
    d = v.shape[-1]
    mask = np.arange(d)[None, None, :] >= gate_idx[None, :, None]
    Z = np.where(mask, v, 0.0)
    n = np.linalg.norm(Z, axis=-1, keepdims=True)
    scale = np.where(n > radii_sinh[None, :, None], radii_sinh[None, :, None] / np.maximum(n, EPS), 1.0)
    Z = Z * scale
    p0 = np.sqrt(1.0 + np.sum(Z * Z, axis=-1, keepdims=True))
    return np.concatenate([p0, Z], axis=-1)


def _h_log(P, Q):
    """Log map at P of Q (batched)."""
    D = _h_dist(P, Q)[..., None]
    sinhD = np.sinh(np.maximum(D, 1e-16))
    V = np.where(D > 1e-12, D * (Q - np.cosh(D) * P) / sinhD, Q - P)
    return V


def _h_exp(P, V):
    n2 = np.sum(V[..., 1:] ** 2, axis=-1, keepdims=True) - V[..., :1] ** 2
    n = np.sqrt(np.maximum(n2, 0.0))
    out = np.where(n > 1e-12, np.cosh(n) * P + np.sinh(n) * V / np.maximum(n, EPS), P + V)
    # renormalize
    nrm = np.sqrt(np.maximum(out[..., :1] ** 2 - np.sum(out[..., 1:] ** 2, axis=-1, keepdims=True), EPS))
    return out / nrm


def _solve_h_group(s, t, gates, max_disk, sweeps=60, inner=8, tol=1e-13):
    B = s.shape[0]
    G = len(gates)
    gate_idx = np.asarray(gates)
    radii_sinh = np.sinh(np.minimum(np.asarray(gates, dtype=float), float(max_disk)))
    # init: points at radius min(j, max_disk) in the deeper endpoint's direction
    vt = t[:, 1:]
    nt = np.linalg.norm(vt, axis=-1, keepdims=True)
    that = vt / np.maximum(nt, EPS)
    cols = []
    for g in gates:
        r = np.sinh(min(float(g), float(max_disk)))
        v = that * r
        p0 = np.sqrt(1.0 + np.sum(v * v, axis=-1, keepdims=True))
        cols.append(np.concatenate([p0, v], axis=-1))
    W = np.stack(cols, axis=1)
    W = _h_gate_project(W, gate_idx, radii_sinh)
    prev = _h_route_length(s, t, W)
    for sweep in range(sweeps):
        order = range(G) if sweep % 2 == 0 else range(G - 1, -1, -1)
        for gi in order:
            u = s if gi == 0 else W[:, gi - 1]
            v = t if gi == G - 1 else W[:, gi + 1]
            w = W[:, gi]
            for _ in range(inner):
                du = np.maximum(_h_dist(w, u), 1e-12)[..., None]
                dv = np.maximum(_h_dist(w, v), 1e-12)[..., None]
                V = _h_log(w, u) / du + _h_log(w, v) / dv
                step = 1.0 / (1.0 / du + 1.0 / dv)
                w = _h_exp(w, step * V)
                w = _h_gate_project(w[:, None, :], gate_idx[gi : gi + 1], radii_sinh[gi : gi + 1])[:, 0]
            W[:, gi] = w
        cur = _h_route_length(s, t, W)
        if np.all(prev - cur <= tol * np.maximum(cur, 1.0)):
            prev = cur
            break
        prev = cur
    return prev, W


def warped_distance_hyperboloid(space, PX, PY, return_waypoints: bool = False):
    """Exact warped distances for hyperboloid-model pairs without a common disk."""
    B = PX.shape[0]
    tx = np.arccosh(np.maximum(PX[:, 0], 1.0))
    ty = np.arccosh(np.maximum(PY[:, 0], 1.0))
    out = np.empty(B)
    ways: list = [None] * B
    groups: dict = {}
    for i in range(B):
        s, t = (PX[i], PY[i]) if tx[i] <= ty[i] else (PY[i], PX[i])
        a, b = _gate_index_range(min(tx[i], ty[i]), max(tx[i], ty[i]))
        if a > b:
            out[i] = float(_h_dist(PX[i], PY[i]))
            ways[i] = []
            continue
        groups.setdefault((a, b), []).append((i, s, t))
    for (a, b), rows in groups.items():
        gates = list(range(a, b + 1))
        s = np.stack([r[1] for r in rows])
        t = np.stack([r[2] for r in rows])
        lens, W = _solve_h_group(s, t, gates, space.max_disk)
        for k, (i, _, _) in enumerate(rows):
            out[i] = lens[k]
            if return_waypoints:
                pts = [W[k, g] for g in range(len(gates))]
                if tx[i] > ty[i]:
                    pts = pts[::-1]
                ways[i] = pts
    if return_waypoints:
        return out, ways
    return out
