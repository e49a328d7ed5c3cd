"""Concrete metric spaces: membership, closed-form distances, samplers.

Six families are implemented:

* ``Euclidean(dim)`` -- flat space, points are coordinate arrays.
* ``FlyingSaucer(max_disk, dim)`` -- union of the nested-support disks
  ``Y_i = { |x| <= i, x_j = 0 for j < i }`` (coordinates 1-based) with the
  induced length metric.  ``max_disk`` truncates the disk tower and ``dim``
  truncates the ambient coordinates.
* ``HyperbolicSaucer(max_disk, dim)`` -- same point set in polar form with
  the warped metric ``ds^2 = dt^2 + sinh(t)^2 dtheta^2``.
* ``HyperbolicPlane()`` -- the warped metric on all of ``[0,inf) x S^1``.
* ``CombTree(max_segment)`` -- segments from the origin to ``(n, 1)`` with
  the induced length metric; a tree.
* ``Wedge(left, right, bp_left, bp_right)`` -- two spaces glued at a single
  identified point; cross-side distances add up through the gluing point.

Distances are closed-form whenever the defining chord or disk structure
allows it; the remaining saucer cases defer to the curve-shortening solver
in :mod:`boundary_lab.shorten`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np

from .constants import MEMBERSHIP_TOL
from .seeding import stream, unit_vector


class SpaceError(ValueError):
    """Base for membership/structure failures."""


class NotInSpaceError(SpaceError):
    pass


class StructuralMismatchError(SpaceError):
    pass


class EmptyFeasibleRegionError(SpaceError):
    pass


class SolverNonconvergenceError(SpaceError):
    """Carries the best upper bound and the residual of the failed solve."""

    def __init__(self, msg, best_upper_bound=None, residual=None):
        super().__init__(msg)
        self.best_upper_bound = best_upper_bound
        self.residual = residual


# ---------------------------------------------------------------------------
# Points


@dataclass(frozen=True)
class PolarPoint:
    """Radial length t >= 0 plus a unit direction."""

    t: float
    u: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "u", np.asarray(self.u, dtype=float))


@dataclass(frozen=True)
class CombPoint:
    """Parameter s in [0,1] along the segment from the origin to (n, 1)."""

    segment: int
    s: float


@dataclass(frozen=True)
class WedgePoint:
    side: str  # "left" | "right"
    native: "Point"


Point = Union[np.ndarray, PolarPoint, CombPoint, WedgePoint]


def origin_of(space) -> Point:
    if isinstance(space, (Euclidean, FlyingSaucer)):
        return np.zeros(space.dim)
    if isinstance(space, HyperbolicPlane):
        return PolarPoint(0.0, np.array([1.0, 0.0]))
    if isinstance(space, HyperbolicSaucer):
        u = np.zeros(space.dim)
        u[0] = 1.0
        return PolarPoint(0.0, u)
    if isinstance(space, CombTree):
        return CombPoint(1, 0.0)
    if isinstance(space, Wedge):
        return WedgePoint("left", space.bp_left)
    raise StructuralMismatchError(f"unknown space {space!r}")


# ---------------------------------------------------------------------------
# Space specifications


@dataclass(frozen=True)
class Euclidean:
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise SpaceError("dim must be >= 1")


@dataclass(frozen=True)
class FlyingSaucer:
    max_disk: int
    dim: int

    def __post_init__(self):
        if self.max_disk < 1:
            raise SpaceError("max_disk must be >= 1")
        if self.dim < self.max_disk:
            raise SpaceError("dim must be >= max_disk: disk i needs coordinates indexed >= i")


@dataclass(frozen=True)
class HyperbolicSaucer:
    max_disk: int
    dim: int

    def __post_init__(self):
        if self.max_disk < 1:
            raise SpaceError("max_disk must be >= 1")
        if self.dim < self.max_disk:
            raise SpaceError("dim must be >= max_disk: disk i needs coordinates indexed >= i")


@dataclass(frozen=True)
class HyperbolicPlane:
    pass


@dataclass(frozen=True)
class CombTree:
    max_segment: int

    def __post_init__(self):
        if self.max_segment < 1:
            raise SpaceError("max_segment must be >= 1")


@dataclass(frozen=True)
class Wedge:
    left: "SpaceSpec"
    right: "SpaceSpec"
    bp_left: Point
    bp_right: Point

    def __post_init__(self):
        for side, space, bp in (("left", self.left, self.bp_left), ("right", self.right, self.bp_right)):
            ok = contains(space, bp)
            if not ok:
                raise SpaceError(f"wedge {side} basepoint not in its space: {ok.diagnostic}")


SpaceSpec = Union[Euclidean, FlyingSaucer, HyperbolicSaucer, HyperbolicPlane, CombTree, Wedge]


# ---------------------------------------------------------------------------
# Membership


class Membership(NamedTuple):
    ok: bool
    diagnostic: Optional[str]

    def __bool__(self):
        return self.ok


def first_support(v: np.ndarray, tol: float = MEMBERSHIP_TOL) -> float:
    """1-based index of the first coordinate exceeding tol; inf for the zero vector."""
    nz = np.nonzero(np.abs(np.asarray(v)) > tol)[0]
    return math.inf if nz.size == 0 else float(nz[0] + 1)


def seg_length(n: int) -> float:
    return math.hypot(n, 1.0)


def contains(space, p, tol: float = MEMBERSHIP_TOL) -> Membership:
    """Membership test with a diagnostic naming the violated constraint."""
    if isinstance(space, Euclidean):
        if not isinstance(p, np.ndarray) or p.shape != (space.dim,):
            raise StructuralMismatchError("expected a coordinate array of length dim")
        return Membership(True, None)

    if isinstance(space, FlyingSaucer):
        if not isinstance(p, np.ndarray) or p.shape != (space.dim,):
            raise StructuralMismatchError("expected a coordinate array of length dim")
        k = min(first_support(p, tol), float(space.max_disk))
        r = float(np.linalg.norm(p))
        if r <= k + tol:
            return Membership(True, None)
        return Membership(False, f"norm {r:.6g} exceeds disk radius {k:.6g} allowed by the support")

    if isinstance(space, (HyperbolicSaucer, HyperbolicPlane)):
        if not isinstance(p, PolarPoint):
            raise StructuralMismatchError("expected a polar point (t, u)")
        dim = 2 if isinstance(space, HyperbolicPlane) else space.dim
        if p.u.shape != (dim,):
            raise StructuralMismatchError(f"direction must have {dim} coordinates")
        if p.t < -tol:
            return Membership(False, "radial coordinate t must be >= 0")
        if abs(np.linalg.norm(p.u) - 1.0) > 1e-9:
            return Membership(False, "direction must be a unit vector")
        if isinstance(space, HyperbolicPlane):
            return Membership(True, None)
        if p.t <= tol:  # the apex belongs to every disk
            return Membership(True, None)
        k = min(first_support(p.u, tol), float(space.max_disk))
        if p.t <= k + tol:
            return Membership(True, None)
        return Membership(False, f"radius {p.t:.6g} exceeds disk radius {k:.6g} allowed by the support")

    if isinstance(space, CombTree):
        if not isinstance(p, CombPoint):
            raise StructuralMismatchError("expected a comb point (segment, s)")
        if not (1 <= p.segment <= space.max_segment):
            return Membership(False, f"segment {p.segment} outside 1..{space.max_segment}")
        if not (-tol <= p.s <= 1 + tol):
            return Membership(False, "parameter s outside [0, 1]")
        return Membership(True, None)

    if isinstance(space, Wedge):
        if not isinstance(p, WedgePoint):
            raise StructuralMismatchError("expected a wedge-tagged point")
        if p.side not in ("left", "right"):
            raise StructuralMismatchError("side must be left or right")
        return contains(space.left if p.side == "left" else space.right, p.native, tol)

    raise StructuralMismatchError(f"unknown space {space!r}")


def require_member(space, p):
    m = contains(space, p)
    if not m:
        raise NotInSpaceError(m.diagnostic or "point not in space")


# ---------------------------------------------------------------------------
# Closed-form distance pieces


def stable_acosh1p(w):
    """acosh(1 + w) for w >= 0, stable near 0."""
    w = np.maximum(w, 0.0)
    return np.log1p(w + np.sqrt(w * (w + 2.0)))


def warped_distance(t1, t2, cos_angle):
    """Distance in the warped metric between (t1,u1), (t2,u2) with cos(angle(u1,u2)).

    cosh d = cosh t1 cosh t2 - sinh t1 sinh t2 cos(angle); evaluated as
    cosh d - 1 = 2 sinh((t1-t2)/2)^2 + sinh t1 sinh t2 (1 - cos angle)
    to avoid cancellation for nearby points.
    """
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    cos_angle = np.clip(np.asarray(cos_angle, dtype=float), -1.0, 1.0)
    w = 2.0 * np.sinh((t1 - t2) / 2.0) ** 2 + np.sinh(t1) * np.sinh(t2) * (1.0 - cos_angle)
    return stable_acosh1p(w)


def flat_chord_feasible(space: FlyingSaucer, x: np.ndarray, y: np.ndarray) -> bool:
    """Whether the ambient segment from x to y stays in the saucer.

    The norm along a segment is maximized at an endpoint and the segment's
    support is contained in the union of the endpoint supports, so the check
    is closed-form.
    """
    k = min(first_support(x), first_support(y), float(space.max_disk))
    r = max(float(np.linalg.norm(x)), float(np.linalg.norm(y)))
    return r <= k + MEMBERSHIP_TOL


def common_disk(space, p: PolarPoint, q: PolarPoint) -> bool:
    """Whether two polar points lie in one disk (always true on the plane)."""
    if isinstance(space, HyperbolicPlane):
        return True
    k = float(space.max_disk)
    if p.t > MEMBERSHIP_TOL:
        k = min(k, first_support(p.u))
    if q.t > MEMBERSHIP_TOL:
        k = min(k, first_support(q.u))
    return max(p.t, q.t) <= k + MEMBERSHIP_TOL


def cos_between(u, v):
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu < 1e-300 or nv < 1e-300:
        raise SpaceError("zero vector has no direction")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def comb_distance(x: CombPoint, y: CombPoint) -> float:
    if x.segment == y.segment:
        return abs(x.s - y.s) * seg_length(x.segment)
    return x.s * seg_length(x.segment) + y.s * seg_length(y.segment)


def comb_radial(p: CombPoint) -> float:
    return p.s * seg_length(p.segment)


# ---------------------------------------------------------------------------
# Distance


def distance(space, x: Point, y: Point, validate: bool = True) -> float:
    """Length-metric distance between two points of ``space``.

    Saucer pairs without a feasible chord / common disk are solved by
    constrained curve shortening; the solver result is the length of an
    explicit vertex-feasible path (an upper bound that the solver certifies
    against the ambient lower bound when it can).
    """
    if validate:
        require_member(space, x)
        require_member(space, y)

    if isinstance(space, Euclidean):
        return float(np.linalg.norm(x - y))

    if isinstance(space, FlyingSaucer):
        if flat_chord_feasible(space, x, y):
            return float(np.linalg.norm(x - y))
        from .gates import flat_distance

        return float(flat_distance(space, x[None, :], y[None, :])[0])

    if isinstance(space, HyperbolicPlane):
        return float(warped_distance(x.t, y.t, cos_between(x.u, y.u) if min(x.t, y.t) > 0 else 1.0))

    if isinstance(space, HyperbolicSaucer):
        if common_disk(space, x, y):
            ca = cos_between(x.u, y.u) if min(x.t, y.t) > MEMBERSHIP_TOL else 1.0
            return float(warped_distance(x.t, y.t, ca))
        from .gates import warped_distance_hyperboloid
        from .shorten import to_hyperboloid

        PX = to_hyperboloid(x.t, x.u)[None, :]
        PY = to_hyperboloid(y.t, y.u)[None, :]
        return float(warped_distance_hyperboloid(space, PX, PY)[0])

    if isinstance(space, CombTree):
        return comb_distance(x, y)

    if isinstance(space, Wedge):
        if x.side == y.side:
            sub = space.left if x.side == "left" else space.right
            return distance(sub, x.native, y.native, validate=False)
        lx, ly = (x, y) if x.side == "left" else (y, x)
        return distance(space.left, lx.native, space.bp_left, validate=False) + distance(
            space.right, ly.native, space.bp_right, validate=False
        )

    raise StructuralMismatchError(f"unknown space {space!r}")


def distance_many(space, xs, ys, validate: bool = False) -> np.ndarray:
    """Vectorized distance over paired point lists (solver calls are batched)."""
    n = len(xs)
    if validate:
        for p in xs:
            require_member(space, p)
        for p in ys:
            require_member(space, p)

    if isinstance(space, Euclidean):
        X = np.asarray(xs)
        Y = np.asarray(ys)
        return np.linalg.norm(X - Y, axis=-1)

    if isinstance(space, FlyingSaucer):
        X = np.asarray(xs)
        Y = np.asarray(ys)
        out = np.linalg.norm(X - Y, axis=-1)
        feas = np.array([flat_chord_feasible(space, X[i], Y[i]) for i in range(n)])
        if not feas.all():
            from .gates import flat_distance

            idx = np.nonzero(~feas)[0]
            out[idx] = flat_distance(space, X[idx], Y[idx])
        return out

    if isinstance(space, (HyperbolicPlane, HyperbolicSaucer)):
        t1 = np.array([p.t for p in xs])
        t2 = np.array([p.t for p in ys])
        ca = np.array(
            [cos_between(xs[i].u, ys[i].u) if min(xs[i].t, ys[i].t) > MEMBERSHIP_TOL else 1.0 for i in range(n)]
        )
        out = warped_distance(t1, t2, ca)
        if isinstance(space, HyperbolicSaucer):
            ok = np.array([common_disk(space, xs[i], ys[i]) for i in range(n)])
            if not ok.all():
                from .gates import warped_distance_hyperboloid
                from .shorten import to_hyperboloid

                idx = np.nonzero(~ok)[0]
                PX = np.stack([to_hyperboloid(xs[i].t, xs[i].u) for i in idx])
                PY = np.stack([to_hyperboloid(ys[i].t, ys[i].u) for i in idx])
                out[idx] = warped_distance_hyperboloid(space, PX, PY)
        return out

    return np.array([distance(space, xs[i], ys[i], validate=False) for i in range(n)])


def radial(space, p: Point) -> float:
    """Distance from the space's origin; closed-form in every family."""
    if isinstance(space, (Euclidean, FlyingSaucer)):
        return float(np.linalg.norm(p))
    if isinstance(space, (HyperbolicSaucer, HyperbolicPlane)):
        return float(p.t)
    if isinstance(space, CombTree):
        return comb_radial(p)
    if isinstance(space, Wedge):
        sub = space.left if p.side == "left" else space.right
        bp = space.bp_left if p.side == "left" else space.bp_right
        return distance(sub, p.native, bp, validate=False)
    raise StructuralMismatchError(f"unknown space {space!r}")


def points_coincide(space, x, y, tol: float = 1e-9) -> bool:
    return distance(space, x, y, validate=False) <= tol


# ---------------------------------------------------------------------------
# Sampling


def sample(space, seed: int, norm_range, count: int) -> list:
    """Deterministic seeded points with radial coordinate in ``norm_range``.

    Saucer samplers draw an admissible disk index first, then a direction
    supported on the allowed coordinates.  The comb sampler cycles through
    admissible segments round-robin so that layer statistics cover every
    segment once ``count`` reaches the segment count.
    """
    lo, hi = float(norm_range[0]), float(norm_range[1])
    if count < 1:
        raise SpaceError("count must be >= 1")
    if lo < 0 or hi < lo:
        raise SpaceError("norm range must satisfy 0 <= lo <= hi")

    if isinstance(space, Euclidean):
        out = []
        for i in range(count):
            rng = stream(seed, i)
            r = rng.uniform(lo, hi)
            out.append(r * unit_vector(rng, space.dim))
        return out

    if isinstance(space, (FlyingSaucer, HyperbolicSaucer)):
        lo_disk = max(1, math.ceil(lo - MEMBERSHIP_TOL))
        if lo_disk > space.max_disk:
            raise EmptyFeasibleRegionError(f"norms above max_disk {space.max_disk} are unreachable")
        out = []
        for i in range(count):
            rng = stream(seed, i)
            disk = int(rng.integers(lo_disk, space.max_disk + 1))
            u = np.zeros(space.dim)
            u[disk - 1 :] = rng.standard_normal(space.dim - disk + 1)
            n = np.linalg.norm(u)
            if n < 1e-12:
                u[disk - 1] = 1.0
                n = 1.0
            u = u / n
            r = rng.uniform(lo, min(hi, float(disk)))
            out.append(r * u if isinstance(space, FlyingSaucer) else PolarPoint(r, u))
        return out

    if isinstance(space, HyperbolicPlane):
        out = []
        for i in range(count):
            rng = stream(seed, i)
            out.append(PolarPoint(rng.uniform(lo, hi), unit_vector(rng, 2)))
        return out

    if isinstance(space, CombTree):
        admissible = [m for m in range(1, space.max_segment + 1) if seg_length(m) > lo]
        if not admissible:
            raise EmptyFeasibleRegionError("no segment reaches the requested radii")
        offset = int(stream(seed).integers(0, len(admissible)))
        out = []
        for i in range(count):
            rng = stream(seed, i)
            m = admissible[(offset + i) % len(admissible)]
            length = seg_length(m)
            out.append(CombPoint(m, rng.uniform(lo / length, min(hi, length) / length)))
        return out

    if isinstance(space, Wedge):
        # Radial sampling around the gluing point; supported when each side is
        # glued at its own origin (the configuration the experiments use).
        for side, sub, bp in (("left", space.left, space.bp_left), ("right", space.right, space.bp_right)):
            if distance(sub, bp, origin_of(sub), validate=False) > 1e-9:
                raise SpaceError("wedge sampler requires gluing at the native origins")
        out = []
        for i in range(count):
            rng = stream(seed, i)
            side = "left" if rng.random() < 0.5 else "right"
            sub = space.left if side == "left" else space.right
            native = sample(sub, int(stream(seed, i, 1).integers(0, 2**63 - 1)), (lo, hi), 1)[0]
            out.append(WedgePoint(side, native))
        return out

    raise StructuralMismatchError(f"unknown space {space!r}")


# ---------------------------------------------------------------------------
# Serialization: plain-text key=value space specs, JSON array points


def spec_to_text(space) -> str:
    if isinstance(space, Euclidean):
        return f"family=euclidean;dim={space.dim}"
    if isinstance(space, FlyingSaucer):
        return f"family=flying_saucer;max_disk={space.max_disk};dim={space.dim}"
    if isinstance(space, HyperbolicSaucer):
        return f"family=hyperbolic_saucer;max_disk={space.max_disk};dim={space.dim}"
    if isinstance(space, HyperbolicPlane):
        return "family=hyperbolic_plane"
    if isinstance(space, CombTree):
        return f"family=comb_tree;max_segment={space.max_segment}"
    if isinstance(space, Wedge):
        return (
            f"family=wedge;left=({spec_to_text(space.left)});right=({spec_to_text(space.right)});"
            f"bp_left={json.dumps(point_to_json(space.bp_left))};"
            f"bp_right={json.dumps(point_to_json(space.bp_right))}"
        )
    raise StructuralMismatchError(f"unknown space {space!r}")


def _split_top_level(text: str, sep: str = ";") -> list:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == sep and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if cur:
        parts.append("".join(cur))
    return parts


def spec_from_text(text: str):
    fields = {}
    for part in _split_top_level(text.strip()):
        if not part:
            continue
        k, _, v = part.partition("=")
        fields[k.strip()] = v.strip()
    family = fields.pop("family", None)
    if family == "euclidean":
        return Euclidean(dim=int(fields.pop("dim")))
    if family == "flying_saucer":
        return FlyingSaucer(max_disk=int(fields.pop("max_disk")), dim=int(fields.pop("dim")))
    if family == "hyperbolic_saucer":
        return HyperbolicSaucer(max_disk=int(fields.pop("max_disk")), dim=int(fields.pop("dim")))
    if family == "hyperbolic_plane":
        return HyperbolicPlane()
    if family == "comb_tree":
        return CombTree(max_segment=int(fields.pop("max_segment")))
    if family == "wedge":
        left = spec_from_text(fields.pop("left").strip("()"))
        right = spec_from_text(fields.pop("right").strip("()"))
        bp_left = point_from_json(json.loads(fields.pop("bp_left")))
        bp_right = point_from_json(json.loads(fields.pop("bp_right")))
        return Wedge(left, right, bp_left, bp_right)
    raise SpaceError(f"unknown family {family!r}")


def point_to_json(p: Point):
    if isinstance(p, np.ndarray):
        return ["cart", [float(v) for v in p]]
    if isinstance(p, PolarPoint):
        return ["polar", float(p.t), [float(v) for v in p.u]]
    if isinstance(p, CombPoint):
        return ["comb", int(p.segment), float(p.s)]
    if isinstance(p, WedgePoint):
        return ["wedge", p.side, point_to_json(p.native)]
    raise StructuralMismatchError(f"unknown point {p!r}")


def point_from_json(data) -> Point:
    tag = data[0]
    if tag == "cart":
        return np.asarray(data[1], dtype=float)
    if tag == "polar":
        return PolarPoint(float(data[1]), np.asarray(data[2], dtype=float))
    if tag == "comb":
        return CombPoint(int(data[1]), float(data[2]))
    if tag == "wedge":
        return WedgePoint(data[1], point_from_json(data[2]))
    raise SpaceError(f"unknown point tag {tag!r}")
