"""Sampled comparison-inequality audits and the angle-lemma audit.

A triangle passes the curvature-``kappa`` comparison when every pair of
points read off two of its sides is no farther apart than the corresponding
pair in the model triangle with the same side lengths.  Negative defects are
expected; only positive defects count against a PASS.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import gates, metric, shorten, spaces
from .constants import AUDIT_TOL
from .seeding import stream, unit_vector


class DegenerateTriangleError(ValueError):
    pass


def comparison_distance(kappa: int, side_ab: float, side_ac: float, side_bc: float,
                        frac_p: float, frac_q: float) -> float:
    """Model-space distance between the points at arclength fractions
    ``frac_p`` along AB and ``frac_q`` along AC of the comparison triangle
    with the given side lengths."""
    for s in (side_ab, side_ac, side_bc):
        if s < 0 or not math.isfinite(s):
            raise DegenerateTriangleError("side lengths must be finite and nonnegative")
    if side_bc > side_ab + side_ac + 1e-9 or side_ab > side_ac + side_bc + 1e-9 \
            or side_ac > side_ab + side_bc + 1e-9:
        raise DegenerateTriangleError("side lengths violate the triangle inequality")
    if not (0.0 <= frac_p <= 1.0 and 0.0 <= frac_q <= 1.0):
        raise ValueError("fractions must lie in [0, 1]")
    p = frac_p * side_ab
    q = frac_q * side_ac
    if kappa == 0:
        if side_ab < 1e-300 or side_ac < 1e-300:
            return abs(p - q) if side_ab < 1e-300 and side_ac < 1e-300 else max(p, q)
        cosg = np.clip((side_ab**2 + side_ac**2 - side_bc**2) / (2 * side_ab * side_ac), -1.0, 1.0)
        return float(math.sqrt(max(p * p + q * q - 2 * p * q * cosg, 0.0)))
    if kappa == -1:
        if side_ab < 1e-300 or side_ac < 1e-300:
            return abs(p - q) if side_ab < 1e-300 and side_ac < 1e-300 else max(p, q)
        cosg = np.clip(
            (math.cosh(side_ab) * math.cosh(side_ac) - math.cosh(side_bc))
            / (math.sinh(side_ab) * math.sinh(side_ac)),
            -1.0,
            1.0,
        )
        return float(spaces.warped_distance(p, q, cosg))
    raise ValueError("kappa must be 0 or -1")


def comparison_distance_many(kappa, l1, l2, l3, f1, f2) -> np.ndarray:
    """Vectorized comparison distances; degenerate rows come back as nan."""
    l1, l2, l3 = (np.asarray(a, dtype=float) for a in (l1, l2, l3))
    f1, f2 = np.asarray(f1, dtype=float), np.asarray(f2, dtype=float)
    bad = (l3 > l1 + l2 + 1e-9) | (l1 > l2 + l3 + 1e-9) | (l2 > l1 + l3 + 1e-9)
    p = f1 * l1
    q = f2 * l2
    tiny = 1e-300
    if kappa == 0:
        cosg = np.clip((l1**2 + l2**2 - l3**2) / np.maximum(2 * l1 * l2, tiny), -1.0, 1.0)
        out = np.sqrt(np.maximum(p * p + q * q - 2 * p * q * cosg, 0.0))
    else:
        cosg = np.clip(
            (np.cosh(l1) * np.cosh(l2) - np.cosh(l3)) / np.maximum(np.sinh(l1) * np.sinh(l2), tiny),
            -1.0,
            1.0,
        )
        out = spaces.warped_distance(p, q, cosg)
    deg = (l1 < tiny) | (l2 < tiny)
    if deg.any():
        out = np.where(deg, np.maximum(p, q), out)
    return np.where(bad, np.nan, out)


# ---------------------------------------------------------------------------
# Triangles


@dataclass
class Side:
    polyline: shorten.Polyline
    cum: np.ndarray

    @property
    def length(self) -> float:
        return float(self.cum[-1])

    def point_from(self, space, start_index: int, frac: float):
        """Point at fraction ``frac`` measured from endpoint 0 or -1."""
        target = frac * self.length if start_index == 0 else (1 - frac) * self.length
        return shorten.point_at(space, self.polyline, self.cum, target)


@dataclass
class Triangle:
    a: object
    b: object
    c: object
    side_ab: Side
    side_ac: Side
    side_bc: Side


def _exact_side(space, x, y, n: int = 33) -> Optional[shorten.Polyline]:
    """Closed-form geodesic between x and y, or None if a solver is needed."""
    if isinstance(space, (spaces.Euclidean, spaces.HyperbolicPlane, spaces.CombTree)):
        return shorten.Polyline(shorten._exact_geodesic(space, x, y, n))
    if isinstance(space, spaces.FlyingSaucer):
        if spaces.flat_chord_feasible(space, x, y):
            return shorten.Polyline([x + s * (y - x) for s in np.linspace(0, 1, n)])
        return None
    if isinstance(space, spaces.HyperbolicSaucer):
        if spaces.common_disk(space, x, y):
            chart = shorten.HypChart(space.max_disk, space.dim)
            P, Q = shorten.to_hyperboloid(x.t, x.u)[None], shorten.to_hyperboloid(y.t, y.u)[None]
            return shorten.Polyline([shorten.from_hyperboloid(chart.interp(P, Q, s)[0]) for s in np.linspace(0, 1, n)])
        return None
    if isinstance(space, spaces.Wedge):
        if x.side == y.side:
            sub = space.left if x.side == "left" else space.right
            native = _exact_side(sub, x.native, y.native, n)
            if native is None:
                return None
            return shorten.Polyline([spaces.WedgePoint(x.side, p) for p in native.points])
        subx = space.left if x.side == "left" else space.right
        bpx = space.bp_left if x.side == "left" else space.bp_right
        suby = space.left if y.side == "left" else space.right
        bpy = space.bp_left if y.side == "left" else space.bp_right
        h1 = _exact_side(subx, x.native, bpx, max(3, n // 2))
        h2 = _exact_side(suby, bpy, y.native, max(3, n // 2))
        if h1 is None or h2 is None:
            return None
        pts = [spaces.WedgePoint(x.side, p) for p in h1.points] + [spaces.WedgePoint(y.side, p) for p in h2.points]
        return shorten.Polyline(pts)
    raise spaces.SpaceError(f"unknown space {space!r}")


def build_sides(space, pairs, solver_opts=None) -> list:
    """Geodesic polylines for many vertex pairs.

    Feasible chords and common-disk pairs are exact closed forms; the rest
    are exact gate-waypoint geodesics (batched).  Returns ``Side`` per pair.
    """
    out = [None] * len(pairs)
    hard_flat, hard_warped = [], []
    for i, (x, y) in enumerate(pairs):
        exact = _exact_side(space, x, y)
        if exact is not None:
            out[i] = Side(exact, shorten.cumulative_lengths(space, exact))
        elif isinstance(space, spaces.FlyingSaucer):
            hard_flat.append(i)
        elif isinstance(space, spaces.HyperbolicSaucer):
            hard_warped.append(i)
        elif isinstance(space, spaces.Wedge):
            # same-side hard pair on a saucer side
            sub = space.left if x.side == "left" else space.right
            native_sides = build_sides(sub, [(x.native, y.native)], solver_opts)
            if native_sides[0] is not None:
                poly = shorten.Polyline([spaces.WedgePoint(x.side, p) for p in native_sides[0].polyline.points])
                out[i] = Side(poly, shorten.cumulative_lengths(space, poly))
        else:
            raise spaces.SpaceError("no side construction for this family")
    if hard_flat:
        X = np.stack([pairs[i][0] for i in hard_flat])
        Y = np.stack([pairs[i][1] for i in hard_flat])
        _, ways = gates.flat_distance(space, X, Y, return_waypoints=True)
        for j, i in enumerate(hard_flat):
            poly = shorten.Polyline([X[j]] + list(ways[j]) + [Y[j]])
            out[i] = Side(poly, shorten.cumulative_lengths(space, poly))
    if hard_warped:
        PX = np.stack([shorten.to_hyperboloid(pairs[i][0].t, pairs[i][0].u) for i in hard_warped])
        PY = np.stack([shorten.to_hyperboloid(pairs[i][1].t, pairs[i][1].u) for i in hard_warped])
        _, ways = gates.warped_distance_hyperboloid(space, PX, PY, return_waypoints=True)
        for j, i in enumerate(hard_warped):
            pts = [pairs[i][0]] + [shorten.from_hyperboloid(w) for w in ways[j]] + [pairs[i][1]]
            poly = shorten.Polyline(pts)
            out[i] = Side(poly, shorten.cumulative_lengths(space, poly))
    return out


def build_triangle(space, a, b, c, solver_opts=None) -> Optional[Triangle]:
    sides = build_sides(space, [(a, b), (a, c), (b, c)], solver_opts)
    if any(s is None for s in sides):
        return None
    return Triangle(a, b, c, sides[0], sides[1], sides[2])


def triangle_grid_pairs(space, tri: Triangle, grid_resolution: int):
    """All (p, q, l1, l2, l3, f1, f2) comparison probes for one triangle.

    Both sides at each shared vertex are swept over the full fraction grid
    (vertices included).
    """
    fr = np.linspace(0.0, 1.0, grid_resolution)
    corners = [
        (tri.side_ab, 0, tri.side_ac, 0, tri.side_bc),  # vertex A
        (tri.side_ab, 1, tri.side_bc, 0, tri.side_ac),  # vertex B
        (tri.side_ac, 1, tri.side_bc, 1, tri.side_ab),  # vertex C
    ]
    probes = []
    for s1, end1, s2, end2, opp in corners:
        pts1 = [s1.point_from(space, -1 if end1 else 0, f) for f in fr]
        pts2 = [s2.point_from(space, -1 if end2 else 0, f) for f in fr]
        for i, f1 in enumerate(fr):
            for j, f2 in enumerate(fr):
                probes.append((pts1[i], pts2[j], s1.length, s2.length, opp.length, f1, f2))
    return probes


def cat_defect(space, tri: Triangle, grid_resolution: int, kappa: int, solver_opts=None) -> float:
    """Max over the fraction grid of d(p, q) minus the comparison distance."""
    probes = triangle_grid_pairs(space, tri, grid_resolution)
    ps = [t[0] for t in probes]
    qs = [t[1] for t in probes]
    actual = _audit_distances(space, ps, qs, solver_opts)
    comp = comparison_distance_many(
        kappa,
        [t[2] for t in probes],
        [t[3] for t in probes],
        [t[4] for t in probes],
        [t[5] for t in probes],
        [t[6] for t in probes],
    )
    d = actual - comp
    return float(np.nanmax(d))


def _audit_distances(space, ps, qs, solver_opts=None):
    if isinstance(space, (spaces.FlyingSaucer, spaces.HyperbolicSaucer)):
        return spaces.distance_many(space, ps, qs)
    if isinstance(space, spaces.Wedge):
        out = np.empty(len(ps))
        same = [i for i in range(len(ps)) if ps[i].side == qs[i].side]
        cross = [i for i in range(len(ps)) if ps[i].side != qs[i].side]
        for side in ("left", "right"):
            idx = [i for i in same if ps[i].side == side]
            if idx:
                sub = space.left if side == "left" else space.right
                out[idx] = _audit_distances(sub, [ps[i].native for i in idx], [qs[i].native for i in idx], solver_opts)
        if cross:
            for i in cross:
                out[i] = spaces.distance(space, ps[i], qs[i], validate=False)
        return out
    return spaces.distance_many(space, ps, qs)


@dataclass
class ComparisonReport:
    kappa: int
    samples: int
    skipped: int
    max_defect: float
    mean_defect: float
    passed: bool
    worst_triangle: Optional[dict] = None
    runtime_s: float = 0.0
    defects: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "kappa": self.kappa,
            "samples": self.samples,
            "skipped": self.skipped,
            "max_defect": self.max_defect,
            "mean_defect": self.mean_defect,
            "passed": self.passed,
            "worst_triangle": self.worst_triangle,
        }


def cat_audit(space, kappa: int, n_triangles: int, seed: int, norm_range,
              grid_resolution: int = 8, tolerance: float = AUDIT_TOL,
              solver_opts=None, min_side: float = 0.05) -> ComparisonReport:
    """Seeded triangle audit; PASS iff max defect <= tolerance."""
    t0 = time.perf_counter()
    triangles = []
    skipped = 0
    for i in range(n_triangles):
        sub_seed = int(stream(seed, i, 3).integers(0, 2**63 - 1))
        a, b, c = spaces.sample(space, sub_seed, norm_range, 3)
        dab = spaces.distance(space, a, b, validate=False)
        dac = spaces.distance(space, a, c, validate=False)
        dbc = spaces.distance(space, b, c, validate=False)
        if min(dab, dac, dbc) < min_side:
            skipped += 1
            continue
        tri = build_triangle(space, a, b, c, solver_opts)
        if tri is None:
            skipped += 1
            continue
        triangles.append((i, tri))

    defects = []
    worst = None
    for i, tri in triangles:
        d = cat_defect(space, tri, grid_resolution, kappa, solver_opts)
        defects.append(d)
        if worst is None or d > worst[0]:
            worst = (d, i, tri)
    max_defect = max(defects) if defects else float("-inf")
    mean_defect = float(np.mean(defects)) if defects else float("nan")
    worst_json = None
    if worst is not None:
        worst_json = {
            "defect": worst[0],
            "sample_index": worst[1],
            "vertices": [spaces.point_to_json(p) for p in (worst[2].a, worst[2].b, worst[2].c)],
        }
    return ComparisonReport(
        kappa=kappa,
        samples=len(defects),
        skipped=skipped,
        max_defect=float(max_defect),
        mean_defect=mean_defect,
        passed=bool(defects) and max_defect <= tolerance,
        worst_triangle=worst_json,
        runtime_s=time.perf_counter() - t0,
        defects=[float(d) for d in defects],
    )


def replay_triangle(space, vertices_json, kappa: int, grid_resolution: int = 8, solver_opts=None) -> float:
    """Recompute the defect of a dumped triangle (CLI --replay path)."""
    a, b, c = (spaces.point_from_json(v) for v in vertices_json)
    tri = build_triangle(space, a, b, c, solver_opts)
    if tri is None:
        raise spaces.SolverNonconvergenceError("triangle side did not converge on replay")
    return cat_defect(space, tri, grid_resolution, kappa, solver_opts)


# ---------------------------------------------------------------------------
# Angle-lemma audit


@dataclass
class LemmaReport:
    alpha: float
    n_pairs: int
    min_slack: float
    passed: bool
    runtime_s: float


def lemma_audit(dim: int, alpha: float, n_pairs: int, seed: int, norm_hi: float = 10.0) -> LemmaReport:
    """Sample pairs with ambient angle <= alpha in Euclidean ``dim``; report
    the minimum of <u|v>_0 - k(alpha) (|u| ^ |v|).

    Every 64th pair is forced onto the equality frontier (equal norms, angle
    exactly alpha).
    """
    t0 = time.perf_counter()
    k = metric.angle_lemma_bound(alpha)
    min_slack = math.inf
    for i in range(n_pairs):
        rng = stream(seed, i)
        u_dir = unit_vector(rng, dim)
        w = rng.standard_normal(dim)
        w -= np.dot(w, u_dir) * u_dir
        nw = np.linalg.norm(w)
        if nw < 1e-12:
            w = np.zeros(dim)
            w[0] = 1.0
            w -= np.dot(w, u_dir) * u_dir
            nw = np.linalg.norm(w)
        w /= nw
        boundary = (i % 64) == 0
        phi = alpha if boundary else rng.uniform(0.0, alpha)
        ru = rng.uniform(0.01, norm_hi)
        rv = ru if boundary else rng.uniform(0.01, norm_hi)
        u = ru * u_dir
        v = rv * (math.cos(phi) * u_dir + math.sin(phi) * w)
        prod = 0.5 * (ru + rv - float(np.linalg.norm(u - v)))
        slack = prod - k * min(ru, rv)
        min_slack = min(min_slack, slack)
    return LemmaReport(
        alpha=alpha,
        n_pairs=n_pairs,
        min_slack=float(min_slack),
        passed=min_slack >= -1e-9,
        runtime_s=time.perf_counter() - t0,
    )
