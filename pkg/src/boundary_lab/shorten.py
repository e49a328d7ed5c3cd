"""Constrained discrete curve shortening and clearance-respecting connectors.

The solver alternates midpoint insertion, local vertex moves that decrease
length, and projection onto the disk-union constraint.  Flat saucers are
shortened in ambient coordinates; warped saucers on the hyperboloid model
(point ``(t, u)`` maps to ``(cosh t, sinh t * u)``, segment length
``acosh(-<p,q>_L)``), where the disk constraint is again a union of convex
sets.  Updates are red-black sweeps, so a whole batch of paths advances in a
handful of numpy operations per iteration.

Determinism: fixed sweep order, fixed doubling schedule (vertex cap 2**12),
no randomized restarts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import spaces
from .constants import MEMBERSHIP_TOL, SOLVER_TOL
from .spaces import (
    CombPoint,
    CombTree,
    Euclidean,
    FlyingSaucer,
    HyperbolicPlane,
    HyperbolicSaucer,
    PolarPoint,
    SpaceError,
    Wedge,
    WedgePoint,
    stable_acosh1p,
)

VERTEX_CAP = 2**12 + 1


class TruncationExhaustedError(SpaceError):
    """The truncation ran out of fresh coordinates (distinct from 'disconnected')."""


@dataclass
class Polyline:
    points: list


@dataclass
class ShortenResult:
    polyline: Polyline
    length: float
    lower_bound: float
    converged: bool
    certified: bool
    length_trace: list = field(default_factory=list)

    @property
    def undecided(self) -> bool:
        return not self.converged


# ---------------------------------------------------------------------------
# Charts: batched geometry for the two saucer ambients


def _min_support(X, tol=1e-11):
    """Vectorized 1-based first-support index; inf for (near-)zero vectors."""
    hot = np.abs(np.asarray(X)) > tol
    sup = np.argmax(hot, axis=-1) + 1.0
    return np.where(hot.any(axis=-1), sup, np.inf)


class FlatChart:
    def __init__(self, max_disk: int, dim: int):
        self.max_disk = max_disk
        self.dim = dim

    def seg_len(self, P, Q):
        return np.linalg.norm(P - Q, axis=-1)

    def feasible_seg(self, P, Q):
        k = np.minimum(np.minimum(_min_support(P), _min_support(Q)), float(self.max_disk))
        r1 = np.linalg.norm(P, axis=-1)
        r2 = np.linalg.norm(Q, axis=-1)
        return np.maximum(r1, r2) <= k + 1e-11

    def honest_seg(self, P, Q):
        return _honest_seg(self, P, Q)

    def midpoint(self, P, Q):
        return 0.5 * (P + Q)

    def interp(self, P, Q, s):
        return P + s * (Q - P)

    def project(self, W):
        """Nearest point of the disk union: per-disk (zero low coordinates,
        clamp the norm), then the candidate disk of least displacement."""
        W = np.asarray(W, dtype=float)
        sq = W * W
        c = np.cumsum(sq, axis=-1)
        total = c[..., -1:]
        K = self.max_disk
        zero = np.zeros(W.shape[:-1] + (1,))
        below = np.concatenate([zero, c[..., : K - 1]], axis=-1)  # (..., K)
        tail = np.maximum(total - below, 0.0)
        n = np.sqrt(tail)
        radii = np.arange(1, K + 1, dtype=float)
        excess = np.maximum(0.0, n - radii)
        disp2 = below + excess * excess
        kstar = np.argmin(disp2, axis=-1)  # 0-based: disk kstar+1
        idx = np.arange(W.shape[-1])
        mask = idx >= kstar[..., None]
        Z = np.where(mask, W, 0.0)
        nz = np.linalg.norm(Z, axis=-1, keepdims=True)
        radius = (kstar + 1).astype(float)[..., None]
        scale = np.where(nz > radius, radius / np.maximum(nz, 1e-300), 1.0)
        return Z * scale

    def ambient_dist(self, P, Q):
        return np.linalg.norm(P - Q, axis=-1)


def lorentz_gram(P, Q):
    """-<p,q>_L - 1, evaluated stably for nearby hyperboloid points."""
    dp = P - Q
    w = 0.5 * (np.sum(dp[..., 1:] ** 2, axis=-1) - dp[..., 0] ** 2)
    return np.maximum(w, 0.0)


def to_hyperboloid(t, u):
    t = np.asarray(t, dtype=float)
    u = np.asarray(u, dtype=float)
    return np.concatenate([np.cosh(t)[..., None], np.sinh(t)[..., None] * u], axis=-1)


def from_hyperboloid(p) -> PolarPoint:
    v = np.asarray(p)[1:]
    n = float(np.linalg.norm(v))
    t = math.asinh(n)
    if n < 1e-15:
        u = np.zeros(len(v))
        u[0] = 1.0
    else:
        u = v / n
    return PolarPoint(t, u)


class HypChart:
    def __init__(self, max_disk: int, dim: int):
        self.max_disk = max_disk
        self.dim = dim

    def seg_len(self, P, Q):
        return stable_acosh1p(lorentz_gram(P, Q))

    def feasible_seg(self, P, Q):
        vP, vQ = P[..., 1:], Q[..., 1:]
        k = np.minimum(np.minimum(_min_support(vP), _min_support(vQ)), float(self.max_disk))
        t1 = np.arccosh(np.maximum(P[..., 0], 1.0))
        t2 = np.arccosh(np.maximum(Q[..., 0], 1.0))
        return np.maximum(t1, t2) <= k + 1e-11

    def honest_seg(self, P, Q):
        return _honest_seg(self, P, Q)

    def midpoint(self, P, Q):
        M = P + Q
        nrm = np.sqrt(np.maximum(M[..., :1] ** 2 - np.sum(M[..., 1:] ** 2, axis=-1, keepdims=True), 1e-300))
        return M / nrm

    def interp(self, P, Q, s):
        D = self.seg_len(P, Q)[..., None]
        small = D < 1e-9
        sinhD = np.sinh(np.maximum(D, 1e-30))
        X = np.where(small, P + s * (Q - P), (np.sinh((1 - s) * D) * P + np.sinh(s * D) * Q) / sinhD)
        # renormalize onto the hyperboloid
        nrm = np.sqrt(np.maximum(X[..., :1] ** 2 - np.sum(X[..., 1:] ** 2, axis=-1, keepdims=True), 1e-300))
        return X / nrm

    def project(self, W):
        """Per-disk hyperbolic projection (zero low spatial coordinates,
        renormalize, clamp the radius); candidate disk picked by spatial
        displacement."""
        W = np.asarray(W, dtype=float)
        v = W[..., 1:]
        sq = v * v
        c = np.cumsum(sq, axis=-1)
        total = c[..., -1:]
        K = self.max_disk
        zero = np.zeros(v.shape[:-1] + (1,))
        below = np.concatenate([zero, c[..., : K - 1]], axis=-1)
        tail = np.maximum(total - below, 0.0)
        n = np.sqrt(tail)
        radii = np.sinh(np.arange(1, K + 1, dtype=float))
        excess = np.maximum(0.0, n - radii)
        disp2 = below + excess * excess
        kstar = np.argmin(disp2, axis=-1)
        idx = np.arange(v.shape[-1])
        mask = idx >= kstar[..., None]
        Z = np.where(mask, v, 0.0)
        nz = np.linalg.norm(Z, axis=-1, keepdims=True)
        radius = np.sinh((kstar + 1).astype(float))[..., None]
        scale = np.where(nz > radius, radius / np.maximum(nz, 1e-300), 1.0)
        Z = Z * scale
        p0 = np.sqrt(1.0 + np.sum(Z * Z, axis=-1, keepdims=True))
        return np.concatenate([p0, Z], axis=-1)

    def ambient_dist(self, P, Q):
        return stable_acosh1p(lorentz_gram(P, Q))


# ---------------------------------------------------------------------------
# Honest segment lengths

_HONEST_DEPTH = 7  # infeasible segments are measured on 2**depth sub-chords


def _honest_seg(chart, P, Q):
    """Per-segment length that cannot cut a constraint corner.

    Feasible segments are exact chords.  A segment whose chord leaves the
    space is measured along its midpoint-projected fine subdivision, which
    follows the local constrained geodesic to second order.
    """
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    chord = chart.seg_len(P, Q)
    feas = chart.feasible_seg(P, Q)
    if feas.all():
        return chord
    lead = chord.shape
    Pf = P.reshape(-1, P.shape[-1])
    Qf = Q.reshape(-1, Q.shape[-1])
    bad = ~feas.reshape(-1)
    S = np.stack([Pf[bad], Qf[bad]], axis=1)
    for _ in range(_HONEST_DEPTH):
        S = _refine(chart, S)
    fine = np.sum(chart.seg_len(S[:, :-1], S[:, 1:]), axis=-1)
    out = chord.reshape(-1).copy()
    out[bad] = np.maximum(fine, out[bad])
    return out.reshape(lead)


# ---------------------------------------------------------------------------
# Core descent


def _polyline_len(chart, P):
    return np.sum(chart.seg_len(P[:, :-1], P[:, 1:]), axis=-1)


def _polyline_len_honest(chart, P):
    return np.sum(chart.honest_seg(P[:, :-1], P[:, 1:]), axis=-1)


def _descend(chart, P, max_sweeps: int, rel_tol: float = 1e-8, trace: Optional[list] = None):
    """Red-black midpoint sweeps; each path retires once a full sweep improves
    its chordal length by less than ``rel_tol`` (relative)."""
    B, n, _ = P.shape
    idx = np.arange(1, n - 1)
    sels = [idx[idx % 2 == 1], idx[idx % 2 == 0]]
    L = _polyline_len(chart, P)
    conv = np.zeros(B, dtype=bool)
    active = np.arange(B)
    for _ in range(max_sweeps):
        if active.size == 0:
            break
        A = P[active]
        La = L[active]
        for sel in sels:
            if sel.size == 0:
                continue
            prev, cur, nxt = A[:, sel - 1], A[:, sel], A[:, sel + 1]
            cand = chart.project(chart.midpoint(prev, nxt))
            old = chart.seg_len(prev, cur) + chart.seg_len(cur, nxt)
            new = chart.seg_len(prev, cand) + chart.seg_len(cand, nxt)
            improve = new < old - 1e-15
            A[:, sel] = np.where(improve[..., None], cand, cur)
        newLa = _polyline_len(chart, A)
        P[active] = A
        L[active] = newLa
        if trace is not None:
            trace.append(float(L[0]))
        done = (La - newLa) <= rel_tol * np.maximum(newLa, 1.0)
        conv[active[done]] = True
        active = active[~done]
    return P, L, conv


def _refine(chart, P):
    B, n, D = P.shape
    Q = np.empty((B, 2 * n - 1, D))
    Q[:, ::2] = P
    Q[:, 1::2] = chart.project(chart.midpoint(P[:, :-1], P[:, 1:]))
    return Q


def _solve_core(chart, inits, lb, h, n_cap, sweeps, trace=None):
    """inits: list of (B, n0, D) arrays sharing endpoints. Returns (L, P, conv).

    The sweep dynamics minimizes the chordal length; reported lengths,
    certification, and refinement decisions use the honest per-segment upper
    bounds so a returned length can never undershoot the induced metric by a
    corner cut.  Certified paths are frozen and skip later refinement rounds.
    """
    B = inits[0].shape[0]
    target = lb + h
    if len(inits) > 1:
        stacked = np.concatenate(inits, axis=0)
        stacked, _, _ = _descend(chart, stacked, max_sweeps=min(sweeps, 80), trace=None)
        L = _polyline_len_honest(chart, stacked).reshape(len(inits), B)
        pick = np.argmin(L, axis=0)
        P = stacked.reshape(len(inits), B, *inits[0].shape[1:])[pick, np.arange(B)]
    else:
        P = np.array(inits[0], dtype=float)

    P, _, conv = _descend(chart, P, max_sweeps=sweeps, trace=trace)
    L = _polyline_len_honest(chart, P)
    open_ = L > target
    while P.shape[1] < n_cap and open_.any():
        prevL = L.copy()
        P = _refine(chart, P)
        sub = np.nonzero(open_)[0]
        Ps = P[sub]
        Ps, _, conv_s = _descend(chart, Ps, max_sweeps=sweeps, trace=trace if 0 in sub else None)
        P[sub] = Ps
        conv[sub] = conv_s
        L = _polyline_len_honest(chart, P)
        improved = (prevL - L) > 1e-9 * np.maximum(L, 1.0)
        open_ = (L > target) & improved
    certified = L <= target
    return L, P, conv | certified


# ---------------------------------------------------------------------------
# Init paths


def _param_route(chart_interp, legs, n):
    """Piecewise path through waypoints, sampled by arclength fractions."""
    pts, lens = legs
    total = sum(lens)
    if total <= 0:
        return np.repeat(pts[0][None, :], n, axis=0)
    cum = np.concatenate([[0.0], np.cumsum(lens)])
    out = np.empty((n, pts[0].shape[-1]))
    ss = np.linspace(0.0, total, n)
    for i, s in enumerate(ss):
        j = min(np.searchsorted(cum, s, side="right") - 1, len(lens) - 1)
        f = (s - cum[j]) / max(lens[j], 1e-300)
        out[i] = chart_interp(pts[j][None, :], pts[j + 1][None, :], min(f, 1.0))[0]
    return out


def _flat_inits(chart, X, Y, n0):
    B, d = X.shape
    s = np.linspace(0.0, 1.0, n0)[None, :, None]
    chord = X[:, None, :] + s * (Y - X)[:, None, :]
    inits = [chord]
    for route in ("origin", "scale"):
        paths = np.empty((B, n0, d))
        for b in range(B):
            x, y = X[b], Y[b]
            rx, ry = np.linalg.norm(x), np.linalg.norm(y)
            if route == "origin":
                pts = [x, np.zeros(d), y]
                lens = [rx, ry]
            else:
                if rx >= ry:
                    mid = x * (ry / rx) if rx > 0 else x
                    pts = [x, mid, y]
                    lens = [rx - ry, float(np.linalg.norm(mid - y))]
                else:
                    mid = y * (rx / ry) if ry > 0 else y
                    pts = [x, mid, y]
                    lens = [float(np.linalg.norm(x - mid)), ry - rx]
            paths[b] = _param_route(chart.interp, (pts, lens), n0)
        inits.append(paths)
    out = []
    for P in inits:
        P = chart.project(P)
        P[:, 0], P[:, -1] = X, Y
        out.append(P)
    return out


def _warped_inits(chart, xs, ys, n0):
    B = len(xs)
    d = chart.dim
    PX = np.stack([to_hyperboloid(p.t, p.u) for p in xs])
    PY = np.stack([to_hyperboloid(p.t, p.u) for p in ys])
    s = np.linspace(0.0, 1.0, n0)
    chord = np.stack([chart.interp(PX, PY, si) for si in s], axis=1)
    inits = [chord]
    apex = np.zeros(d + 1)
    apex[0] = 1.0
    for route in ("origin", "scale"):
        paths = np.empty((B, n0, d + 1))
        for b in range(B):
            x, y = xs[b], ys[b]
            if route == "origin":
                pts = [PX[b], apex, PY[b]]
                lens = [x.t, y.t]
            else:
                if x.t >= y.t:
                    mid = to_hyperboloid(y.t, x.u)
                    lens = [x.t - y.t, float(stable_acosh1p(lorentz_gram(mid, PY[b])))]
                else:
                    mid = to_hyperboloid(x.t, y.u)
                    lens = [float(stable_acosh1p(lorentz_gram(PX[b], mid))), y.t - x.t]
                pts = [PX[b], mid, PY[b]]
            paths[b] = _param_route(chart.interp, (pts, lens), n0)
        inits.append(paths)
    out = []
    for P in inits:
        P = chart.project(P)
        P[:, 0], P[:, -1] = PX, PY
        out.append(P)
    return out


# ---------------------------------------------------------------------------
# Public pair solvers (used by spaces.distance for infeasible chords)


def solve_pairs_flat(space: FlyingSaucer, X, Y, h: float = SOLVER_TOL, n_cap: int = 257, sweeps: int = 400,
                     return_paths: bool = False):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    chart = FlatChart(space.max_disk, space.dim)
    lb = chart.ambient_dist(X, Y)
    inits = _flat_inits(chart, X, Y, n0=17)
    L, P, conv = _solve_core(chart, inits, lb, h, n_cap, sweeps)
    if return_paths:
        return L, conv, P
    return L, conv


def solve_pairs_warped(space: HyperbolicSaucer, xs, ys, h: float = SOLVER_TOL, n_cap: int = 257, sweeps: int = 400,
                       return_paths: bool = False):
    chart = HypChart(space.max_disk, space.dim)
    PX = np.stack([to_hyperboloid(p.t, p.u) for p in xs])
    PY = np.stack([to_hyperboloid(p.t, p.u) for p in ys])
    lb = chart.ambient_dist(PX, PY)
    inits = _warped_inits(chart, xs, ys, n0=17)
    L, P, conv = _solve_core(chart, inits, lb, h, n_cap, sweeps)
    if return_paths:
        return L, conv, P
    return L, conv


# ---------------------------------------------------------------------------
# Path length


def _pair_length(space, a, b) -> float:
    """Local length of a polyline edge: exact closed form for feasible pairs,
    the honest route bound for pairs straddling a constraint seam."""
    if isinstance(space, Euclidean):
        return float(np.linalg.norm(a - b))
    if isinstance(space, FlyingSaucer):
        chart = FlatChart(space.max_disk, space.dim)
        return float(chart.honest_seg(np.asarray(a)[None], np.asarray(b)[None])[0])
    if isinstance(space, HyperbolicPlane):
        ca = spaces.cos_between(a.u, b.u) if min(a.t, b.t) > MEMBERSHIP_TOL else 1.0
        return float(spaces.warped_distance(a.t, b.t, ca))
    if isinstance(space, HyperbolicSaucer):
        chart = HypChart(space.max_disk, space.dim)
        return float(chart.honest_seg(to_hyperboloid(a.t, a.u)[None], to_hyperboloid(b.t, b.u)[None])[0])
    if isinstance(space, (CombTree, Wedge)):
        return spaces.distance(space, a, b, validate=False)
    raise SpaceError(f"unknown space {space!r}")


def path_length(space, path: Polyline) -> float:
    """Sum of closed-form local distances over consecutive vertex pairs."""
    pts = path.points
    if len(pts) < 2:
        return 0.0
    for p in pts:
        spaces.require_member(space, p)
    return float(sum(_pair_length(space, pts[i], pts[i + 1]) for i in range(len(pts) - 1)))


# ---------------------------------------------------------------------------
# shorten_path: the spec-level operation


def _exact_geodesic(space, x, y, n: int) -> list:
    """Closed-form geodesics for families that never need the solver."""
    if isinstance(space, Euclidean):
        return [x + s * (y - x) for s in np.linspace(0, 1, n)]
    if isinstance(space, HyperbolicPlane):
        P, Q = to_hyperboloid(x.t, x.u), to_hyperboloid(y.t, y.u)
        chart = HypChart(1, 2)
        return [from_hyperboloid(chart.interp(P[None], Q[None], s)[0]) for s in np.linspace(0, 1, n)]
    if isinstance(space, CombTree):
        if x.segment == y.segment:
            return [CombPoint(x.segment, x.s + s * (y.s - x.s)) for s in np.linspace(0, 1, n)]
        half = max(2, n // 2)
        leg1 = [CombPoint(x.segment, x.s * (1 - s)) for s in np.linspace(0, 1, half)]
        leg2 = [CombPoint(y.segment, y.s * s) for s in np.linspace(0, 1, half)][1:]
        return leg1 + leg2
    raise SpaceError("no exact geodesic for this family")


def shorten_path(space, init: Polyline, h: float = SOLVER_TOL, n_cap: int = 257, sweeps: int = 400) -> ShortenResult:
    """Shorten ``init`` keeping endpoints fixed and every vertex in the space.

    Certified when the final length is within ``h`` of the certified lower
    bound (the ambient distance); otherwise the best path found is returned
    and flagged undecided unless the sweep criterion converged.
    """
    pts = init.points
    if len(pts) < 2:
        raise SpaceError("need at least two vertices")
    x, y = pts[0], pts[-1]
    spaces.require_member(space, x)
    spaces.require_member(space, y)

    if isinstance(space, (Euclidean, HyperbolicPlane, CombTree)):
        n = max(len(pts), 9)
        geo = _exact_geodesic(space, x, y, n)
        poly = Polyline(geo)
        length = path_length(space, poly)
        return ShortenResult(poly, length, length, True, True, [length])

    if isinstance(space, Wedge):
        if x.side == y.side:
            sub = space.left if x.side == "left" else space.right
            res = shorten_path(sub, Polyline([p.native for p in pts if p.side == x.side]), h, n_cap, sweeps)
            poly = Polyline([WedgePoint(x.side, p) for p in res.polyline.points])
            return ShortenResult(poly, res.length, res.lower_bound, res.converged, res.certified, res.length_trace)
        lsub, rsub = space.left, space.right
        r1 = shorten_path(lsub, Polyline([x.native if x.side == "left" else y.native, space.bp_left]), h, n_cap, sweeps)
        r2 = shorten_path(rsub, Polyline([space.bp_right, y.native if y.side == "right" else x.native]), h, n_cap, sweeps)
        left_pts = [WedgePoint("left", p) for p in r1.polyline.points]
        right_pts = [WedgePoint("right", p) for p in r2.polyline.points]
        pts_out = left_pts + right_pts if x.side == "left" else list(reversed(left_pts + right_pts))
        length = r1.length + r2.length
        return ShortenResult(Polyline(pts_out), length, length, r1.converged and r2.converged,
                             r1.certified and r2.certified, [])

    trace: list = []
    if isinstance(space, FlyingSaucer):
        chart = FlatChart(space.max_disk, space.dim)
        P = np.asarray(pts, dtype=float)[None, :, :]
        P = chart.project(P)
        P[0, 0], P[0, -1] = x, y
        lb = chart.ambient_dist(P[:, 0], P[:, -1])
        L, P, conv = _solve_core(chart, [P], lb, h, n_cap, sweeps, trace=trace)
        out = [P[0, i] for i in range(P.shape[1])]
    elif isinstance(space, HyperbolicSaucer):
        chart = HypChart(space.max_disk, space.dim)
        P = np.stack([to_hyperboloid(p.t, p.u) for p in pts])[None, :, :]
        P = chart.project(P)
        P[0, 0], P[0, -1] = to_hyperboloid(x.t, x.u), to_hyperboloid(y.t, y.u)
        lb = chart.ambient_dist(P[:, 0], P[:, -1])
        L, P, conv = _solve_core(chart, [P], lb, h, n_cap, sweeps, trace=trace)
        out = [from_hyperboloid(P[0, i]) for i in range(P.shape[1])]
    else:
        raise SpaceError(f"unknown space {space!r}")

    length = float(L[0])
    certified = length <= float(lb[0]) + h
    return ShortenResult(Polyline(out), length, float(lb[0]), bool(conv[0]), certified, trace)


# ---------------------------------------------------------------------------
# Arclength lookup along a polyline


def cumulative_lengths(space, path: Polyline) -> np.ndarray:
    pts = path.points
    out = np.zeros(len(pts))
    for i in range(len(pts) - 1):
        out[i + 1] = out[i] + _pair_length(space, pts[i], pts[i + 1])
    return out


def _walk_fine(chart, A, B, f: float):
    """Point at fraction ``f`` of the fine subdivision of an infeasible segment."""
    S = np.stack([A, B])[None, :, :]
    for _ in range(_HONEST_DEPTH):
        S = _refine(chart, S)
    S = S[0]
    lens = chart.seg_len(S[:-1], S[1:])
    cum = np.concatenate([[0.0], np.cumsum(lens)])
    t = f * cum[-1]
    j = min(int(np.searchsorted(cum, t, side="right") - 1), len(lens) - 1)
    seg = max(cum[j + 1] - cum[j], 1e-300)
    return chart.interp(S[j][None], S[j + 1][None], (t - cum[j]) / seg)[0]


def point_at(space, path: Polyline, cum: np.ndarray, target: float):
    """Point at arclength ``target``, interpolating locally (and walking the
    fine subdivision inside segments whose straight chord leaves the space)."""
    pts = path.points
    target = min(max(target, 0.0), float(cum[-1]))
    j = int(np.searchsorted(cum, target, side="right") - 1)
    j = min(j, len(pts) - 2)
    seg = cum[j + 1] - cum[j]
    f = 0.0 if seg <= 1e-300 else (target - cum[j]) / seg
    a, b = pts[j], pts[j + 1]
    if isinstance(space, Euclidean):
        return a + f * (b - a)
    if isinstance(space, FlyingSaucer):
        chart = FlatChart(space.max_disk, space.dim)
        A, B = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        if chart.feasible_seg(A[None], B[None])[0]:
            return A + f * (B - A)
        return _walk_fine(chart, A, B, f)
    if isinstance(space, HyperbolicPlane):
        chart = HypChart(1, 2)
        q = chart.interp(to_hyperboloid(a.t, a.u)[None], to_hyperboloid(b.t, b.u)[None], f)[0]
        return from_hyperboloid(q)
    if isinstance(space, HyperbolicSaucer):
        chart = HypChart(space.max_disk, space.dim)
        A, B = to_hyperboloid(a.t, a.u), to_hyperboloid(b.t, b.u)
        if chart.feasible_seg(A[None], B[None])[0]:
            return from_hyperboloid(chart.interp(A[None], B[None], f)[0])
        return from_hyperboloid(_walk_fine(chart, A, B, f))
    if isinstance(space, CombTree):
        if a.segment == b.segment:
            return CombPoint(a.segment, a.s + f * (b.s - a.s))
        d_total = _pair_length(space, a, b)
        d1 = a.s * spaces.seg_length(a.segment)
        run = f * d_total
        if run <= d1:
            return CombPoint(a.segment, a.s - run / spaces.seg_length(a.segment))
        return CombPoint(b.segment, (run - d1) / spaces.seg_length(b.segment))
    if isinstance(space, Wedge):
        if a.side == b.side:
            sub = space.left if a.side == "left" else space.right
            sub_cum = np.array([0.0, _pair_length(sub, a.native, b.native)])
            return WedgePoint(a.side, point_at(sub, Polyline([a.native, b.native]), sub_cum, f * sub_cum[-1]))
        # crossing pair: route through the gluing point
        sub_a = space.left if a.side == "left" else space.right
        bp_a = space.bp_left if a.side == "left" else space.bp_right
        sub_b = space.left if b.side == "left" else space.right
        bp_b = space.bp_left if b.side == "left" else space.bp_right
        d1 = spaces.distance(sub_a, a.native, bp_a, validate=False)
        run = f * _pair_length(space, a, b)
        if run <= d1:
            sub_cum = np.array([0.0, d1])
            return WedgePoint(a.side, point_at(sub_a, Polyline([a.native, bp_a]), sub_cum, run))
        d2 = spaces.distance(sub_b, bp_b, b.native, validate=False)
        sub_cum = np.array([0.0, d2])
        return WedgePoint(b.side, point_at(sub_b, Polyline([bp_b, b.native]), sub_cum, run - d1))
    raise SpaceError(f"unknown space {space!r}")


# ---------------------------------------------------------------------------
# Clearance-respecting connectors


def _arc_points(R, a_hat, b_hat, fresh=None, step: float = 0.15):
    """Constant-radius arc from R*a_hat to R*b_hat, optionally via a fresh axis."""
    legs = []
    if fresh is not None:
        legs = [(a_hat, fresh), (fresh, b_hat)]
    else:
        legs = [(a_hat, b_hat)]
    out = []
    for u0, u1 in legs:
        w = u1 - np.dot(u1, u0) * u0
        nw = np.linalg.norm(w)
        theta = math.acos(float(np.clip(np.dot(u0, u1), -1.0, 1.0)))
        if nw < 1e-12:
            if theta < 1e-9:
                out.append(R * u0)
                continue
            raise SpaceError("antipodal arc needs an intermediate axis")
        w = w / nw
        n = max(2, int(math.ceil(theta / step)) + 1)
        for s in np.linspace(0.0, theta, n):
            out.append(R * (math.cos(s) * u0 + math.sin(s) * w))
    dedup = [out[0]]
    for p in out[1:]:
        if np.linalg.norm(p - dedup[-1]) > 1e-12:
            dedup.append(p)
    return dedup


def _radial_leg(p, R, step: float = 0.5):
    """Straight radial run from p down/up to radius R (flat coordinates)."""
    r = np.linalg.norm(p)
    if abs(r - R) < 1e-12:
        return [p]
    n = max(2, int(math.ceil(abs(r - R) / step)) + 1)
    return [p * (1 + (R / r - 1) * s) for s in np.linspace(0.0, 1.0, n)]


def _deep_axis(space, x_hat, y_hat, R):
    """Axis index m >= ceil(R) for routing a constant-radius arc.

    Any such axis keeps membership along both great-circle legs (the union
    support's first index stays >= R); prefer the axis most orthogonal to the
    endpoint directions so the arcs are well defined."""
    m0 = max(1, math.ceil(R - MEMBERSHIP_TOL))
    if m0 > space.dim:
        return None
    overlap = np.abs(x_hat[m0 - 1 :]) + np.abs(y_hat[m0 - 1 :])
    j = int(np.argmin(overlap)) + m0
    if max(abs(x_hat[j - 1]), abs(y_hat[j - 1])) > 1.0 - 1e-9:
        return None
    return j


def sphere_connector(space, x, y, clearance: float) -> Optional[Polyline]:
    """Polyline from x to y whose vertices keep radial coordinate
    >= min(rad x, rad y) > clearance; None when no such route exists;
    TruncationExhaustedError when only the truncation blocks it."""
    rx, ry = spaces.radial(space, x), spaces.radial(space, y)
    if min(rx, ry) <= clearance:
        raise SpaceError("endpoints must clear the excluded ball")
    R = min(rx, ry)

    if isinstance(space, Euclidean):
        if space.dim == 1:
            if x[0] * y[0] > 0:
                return Polyline([x, y])
            return None
        xh, yh = x / rx, y / ry
        try:
            arc = _arc_points(R, xh, yh)
        except SpaceError:
            perp = np.zeros(space.dim)
            perp[int(np.argmin(np.abs(xh)))] = 1.0
            perp = perp - np.dot(perp, xh) * xh
            arc = _arc_points(R, xh, yh, fresh=perp / np.linalg.norm(perp))
        pts = _radial_leg(x, R) + arc + _radial_leg(y, R)[::-1]
        return Polyline(_dedup(space, pts))

    if isinstance(space, FlyingSaucer):
        xh, yh = x / rx, y / ry
        j = _deep_axis(space, xh, yh, R)
        if j is None:
            raise TruncationExhaustedError("no deep coordinate direction at this radius")
        fresh = np.zeros(space.dim)
        fresh[j - 1] = 1.0
        arc = _arc_points(R, xh, yh, fresh=fresh)
        pts = _radial_leg(x, R) + arc + _radial_leg(y, R)[::-1]
        return Polyline(_dedup(space, pts))

    if isinstance(space, HyperbolicPlane):
        a = math.atan2(x.u[1], x.u[0])
        b = math.atan2(y.u[1], y.u[0])
        dphi = (b - a) % (2 * math.pi)
        if dphi > math.pi:
            dphi -= 2 * math.pi
        n = max(2, int(math.ceil(abs(dphi) / 0.15)) + 1)
        arc = [PolarPoint(R, np.array([math.cos(a + s), math.sin(a + s)])) for s in np.linspace(0.0, dphi, n)]
        pts = [PolarPoint(t, x.u) for t in np.linspace(rx, R, max(2, int(abs(rx - R) / 0.5) + 2))]
        pts += arc
        pts += [PolarPoint(t, y.u) for t in np.linspace(R, ry, max(2, int(abs(ry - R) / 0.5) + 2))]
        return Polyline(_dedup(space, pts))

    if isinstance(space, HyperbolicSaucer):
        j = _deep_axis(space, x.u, y.u, R)
        if j is None:
            raise TruncationExhaustedError("no deep coordinate direction at this radius")
        fresh = np.zeros(space.dim)
        fresh[j - 1] = 1.0
        arc_flat = _arc_points(1.0, x.u, y.u, fresh=fresh)
        pts = [PolarPoint(t, x.u) for t in np.linspace(rx, R, max(2, int(abs(rx - R) / 0.5) + 2))]
        pts += [PolarPoint(R, u / np.linalg.norm(u)) for u in arc_flat]
        pts += [PolarPoint(t, y.u) for t in np.linspace(R, ry, max(2, int(abs(ry - R) / 0.5) + 2))]
        return Polyline(_dedup(space, pts))

    if isinstance(space, CombTree):
        if x.segment != y.segment:
            return None  # every cross-segment path passes through the origin
        return Polyline([x, y])

    if isinstance(space, Wedge):
        if x.side != y.side:
            return None  # cross-side paths pass through the gluing point
        sub = space.left if x.side == "left" else space.right
        bp = space.bp_left if x.side == "left" else space.bp_right
        if spaces.distance(sub, bp, spaces.origin_of(sub), validate=False) > 1e-9:
            raise SpaceError("wedge connector requires gluing at the native origins")
        native = sphere_connector(sub, x.native, y.native, clearance)
        if native is None:
            return None
        return Polyline([WedgePoint(x.side, p) for p in native.points])

    raise SpaceError(f"unknown space {space!r}")


def _dedup(space, pts):
    out = [pts[0]]
    for p in pts[1:]:
        if spaces.distance(space, out[-1], p, validate=False) > 1e-12:
            out.append(p)
    return out
