"""Rays, divergence certificates, equivalence chains, end trees, and the
natural maps between the three boundaries.

Certificates are finite-depth numeric witnesses: a divergence certificate
records a tail index past which all pairwise products from the origin clear
a threshold; a chain certificate strings sequences together with pairwise
witnesses.  End trees are built on sampled skeletons with explicit
clearance-respecting connectors; an edge that cannot be attempted never
merges components (conservative toward over-counting).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import metric, shorten, spaces
from .constants import DEFAULT_THRESHOLD
from .seeding import stream, unit_vector
from .shorten import Polyline, TruncationExhaustedError, sphere_connector
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
)


class BoundedRayError(SpaceError):
    """The ray cannot be extended past its bound (no divergence-class image)."""


class UndecidedError(SpaceError):
    """Finite-depth data does not settle the query."""


# ---------------------------------------------------------------------------
# Rays


@dataclass(frozen=True)
class Ray:
    """Unit-speed radial ray from the origin.

    direction: unit coordinate vector (flat families and polar families) or a
    comb segment index; wedges tag a native ray with a side.
    """

    direction: object
    side: Optional[str] = None  # wedges only


def ray_extension_bound(space, direction) -> float:
    """Largest radial parameter to which the ray extends (inf if unbounded)."""
    if isinstance(space, Euclidean):
        return math.inf
    if isinstance(space, HyperbolicPlane):
        return math.inf
    if isinstance(space, (FlyingSaucer, HyperbolicSaucer)):
        u = np.asarray(direction, dtype=float)
        if abs(np.linalg.norm(u) - 1.0) > 1e-9:
            raise SpaceError("direction must be a unit vector")
        j = spaces.first_support(u, tol=1e-9)
        return float(min(j, space.max_disk))
    if isinstance(space, CombTree):
        n = int(direction)
        if not (1 <= n <= space.max_segment):
            raise SpaceError("segment index out of range")
        return spaces.seg_length(n)
    if isinstance(space, Wedge):
        raise SpaceError("use a side-tagged Ray for wedges")
    raise SpaceError(f"unknown space {space!r}")


def ray_point(space, ray: Ray, t: float):
    """Point at radial parameter t along the ray; d(o, point) = t."""
    if isinstance(space, Wedge):
        sub = space.left if ray.side == "left" else space.right
        return WedgePoint(ray.side, ray_point(sub, Ray(ray.direction), t))
    bound = ray_extension_bound(space, ray.direction)
    if t > bound + 1e-9:
        raise BoundedRayError(f"parameter {t} beyond extension bound {bound}")
    if isinstance(space, (Euclidean, FlyingSaucer)):
        return t * np.asarray(ray.direction, dtype=float)
    if isinstance(space, (HyperbolicPlane, HyperbolicSaucer)):
        return PolarPoint(t, np.asarray(ray.direction, dtype=float))
    if isinstance(space, CombTree):
        n = int(ray.direction)
        return CombPoint(n, t / spaces.seg_length(n))
    raise SpaceError(f"unknown space {space!r}")


def ray_bound(space, ray: Ray) -> float:
    if isinstance(space, Wedge):
        sub = space.left if ray.side == "left" else space.right
        return ray_bound(sub, Ray(ray.direction))
    return ray_extension_bound(space, ray.direction)


@dataclass
class EquivalenceTrace:
    equivalent: bool
    sup_distance: float
    trace: list  # (t, d(r1(t), r2(t)))


def rays_equivalent(space, r1: Ray, r2: Ray, horizon: float, n_samples: int = 32) -> EquivalenceTrace:
    """Growth-vs-plateau verdict on sup_t d(r1(t), r2(t)) up to the horizon.

    Boundedness is not decidable at a finite horizon; the trace is the honest
    datum.  Relative growth above 10% between horizon/2 and horizon reads as
    inequivalent."""
    for r in (r1, r2):
        if ray_bound(space, r) < horizon - 1e-9:
            raise BoundedRayError("horizon exceeds an extension bound")
    ts = np.linspace(horizon / n_samples, horizon, n_samples)
    pts1 = [ray_point(space, r1, t) for t in ts]
    pts2 = [ray_point(space, r2, t) for t in ts]
    ds = spaces.distance_many(space, pts1, pts2)
    sup = float(np.max(ds))
    half = float(np.max(ds[: n_samples // 2]))
    grew = sup > half * 1.10 + 1e-9
    return EquivalenceTrace(equivalent=not grew, sup_distance=sup, trace=list(zip(ts.tolist(), ds.tolist())))


# ---------------------------------------------------------------------------
# Sequence generators


@dataclass(frozen=True)
class RadialRay:
    direction: object
    side: Optional[str] = None


@dataclass(frozen=True)
class SaucerDoubling:
    """x_n with norm 2^n supported on a fresh coordinate pair per term."""

    side: Optional[str] = None


@dataclass(frozen=True)
class AxisSeq:
    directions: tuple  # unit vectors (or polar directions)
    side: Optional[str] = None


@dataclass(frozen=True)
class Explicit:
    points: tuple
    side: Optional[str] = None


Generator = Union[RadialRay, SaucerDoubling, AxisSeq, Explicit]


@dataclass(frozen=True)
class GromovSeq:
    generator: Generator
    depth: int


def _wrap_side(side, pt):
    return WedgePoint(side, pt) if side is not None else pt


def _native_space(space, side):
    if side is None:
        return space
    return space.left if side == "left" else space.right


def doubling_point(dim: int, n: int) -> np.ndarray:
    x = np.zeros(dim)
    x[2**n - 1] = x[2**n] = 2 ** (n - 0.5)
    return x


def realize(space, seq: GromovSeq) -> list:
    """Realized terms 1..depth, raising when the truncation cannot host them."""
    gen = seq.generator
    sub = _native_space(space, gen.side)
    out = []
    if isinstance(gen, RadialRay):
        bound = ray_extension_bound(sub, gen.direction)
        if bound < seq.depth - 1e-9:
            raise BoundedRayError(f"radial sequence stops at {bound}; depth {seq.depth} unreachable")
        for n in range(1, seq.depth + 1):
            out.append(ray_point(sub, Ray(gen.direction), float(n)))
    elif isinstance(gen, SaucerDoubling):
        if not isinstance(sub, (FlyingSaucer, HyperbolicSaucer)):
            raise SpaceError("doubling sequence lives in a saucer")
        need = 2**seq.depth + 1
        if sub.dim < need or sub.max_disk < 2**seq.depth:
            raise TruncationExhaustedError(
                f"doubling depth {seq.depth} needs dim >= {need} and max_disk >= {2**seq.depth}"
            )
        for n in range(1, seq.depth + 1):
            x = doubling_point(sub.dim, n)
            if isinstance(sub, FlyingSaucer):
                out.append(x)
            else:
                out.append(PolarPoint(float(np.linalg.norm(x)), x / np.linalg.norm(x)))
    elif isinstance(gen, AxisSeq):
        if len(gen.directions) < seq.depth:
            raise SpaceError("not enough directions for the depth")
        for n in range(1, seq.depth + 1):
            u = np.asarray(gen.directions[n - 1], dtype=float)
            if isinstance(sub, (FlyingSaucer, Euclidean)):
                pt = float(n) * u
                spaces.require_member(sub, pt)
                out.append(pt)
            else:
                pt = PolarPoint(float(n), u)
                spaces.require_member(sub, pt)
                out.append(pt)
    elif isinstance(gen, Explicit):
        if len(gen.points) < seq.depth:
            raise SpaceError("explicit sequence shorter than depth")
        for p in gen.points[: seq.depth]:
            spaces.require_member(sub, p)
            out.append(p)
    else:
        raise SpaceError(f"unknown generator {gen!r}")
    return [_wrap_side(gen.side, p) for p in out]


# ---------------------------------------------------------------------------
# Certificates


@dataclass
class DivergenceCertificate:
    threshold: float
    tail_index: int
    min_product: float
    depth: int

    def to_json(self):
        return {
            "threshold": self.threshold,
            "tail_index": self.tail_index,
            "min_product": self.min_product,
            "depth": self.depth,
        }


def _pairwise_products(space, terms_a, terms_b) -> np.ndarray:
    """products[i, j] = <a_{i+1} | b_{j+1}>_o computed with the space's metric."""
    o = spaces.origin_of(space)
    na, nb = len(terms_a), len(terms_b)
    ra = spaces.distance_many(space, terms_a, [o] * na)
    rb = spaces.distance_many(space, terms_b, [o] * nb)
    xs, ys = [], []
    for i in range(na):
        for j in range(nb):
            xs.append(terms_a[i])
            ys.append(terms_b[j])
    dab = spaces.distance_many(space, xs, ys).reshape(na, nb)
    return np.maximum(0.0, (ra[:, None] + rb[None, :] - dab) / 2.0)


def _tail_scan(products: np.ndarray, threshold: float, depth: int):
    """Smallest N with min over [N, depth]^2 >= threshold, else None."""
    best = -math.inf
    for N in range(1, depth + 1):
        m = float(np.min(products[N - 1 :, N - 1 :]))
        best = max(best, m)
        if m >= threshold:
            return N, m, best
    return None, None, best


def gromov_certificate(space, seq: GromovSeq, threshold: float = DEFAULT_THRESHOLD,
                       depth: Optional[int] = None):
    """Certificate that the sequence's pairwise products diverge past a tail.

    Returns a DivergenceCertificate, or None (undecided) with the achieved
    value recoverable via e_witness-style inspection."""
    depth = depth or seq.depth
    terms = realize(space, seq)[:depth]
    prods = _pairwise_products(space, terms, terms)
    N, m, _ = _tail_scan(prods, threshold, depth)
    if N is None:
        return None
    return DivergenceCertificate(threshold, N, m, depth)


def e_witness(space, a: GromovSeq, b: GromovSeq, threshold: float = DEFAULT_THRESHOLD,
              depth: Optional[int] = None):
    """Divergence witness for the cross products of two sequences.

    Returns (certificate, achieved): certificate None when undecided, and
    ``achieved`` the best min-over-tail product seen at this depth."""
    depth = depth or min(a.depth, b.depth)
    ta = realize(space, a)[:depth]
    tb = realize(space, b)[:depth]
    prods = _pairwise_products(space, ta, tb)
    N, m, best = _tail_scan(prods, threshold, depth)
    if N is None:
        return None, best
    return DivergenceCertificate(threshold, N, m, depth), m


@dataclass
class ChainCertificate:
    links: list  # GromovSeq
    witnesses: list  # DivergenceCertificate per adjacent pair
    notes: dict = field(default_factory=dict)

    @property
    def mediators(self) -> int:
        return max(0, len(self.links) - 2)

    def to_json(self):
        return {
            "links": [describe_generator(s) for s in self.links],
            "witnesses": [w.to_json() for w in self.witnesses],
            "mediators": self.mediators,
            "notes": self.notes,
        }


def describe_generator(seq: GromovSeq) -> dict:
    gen = seq.generator
    out = {"depth": seq.depth, "side": gen.side}
    if isinstance(gen, RadialRay):
        out.update(kind="radial_ray", direction=[float(v) for v in np.atleast_1d(gen.direction)])
    elif isinstance(gen, SaucerDoubling):
        out.update(kind="saucer_doubling")
    elif isinstance(gen, AxisSeq):
        out.update(kind="axis_seq", directions=[[float(v) for v in u] for u in gen.directions])
    else:
        out.update(kind="explicit", points=[spaces.point_to_json(p) for p in gen.points])
    return out


def generator_from_json(data: dict) -> GromovSeq:
    kind = data["kind"]
    side = data.get("side")
    depth = data["depth"]
    if kind == "radial_ray":
        return GromovSeq(RadialRay(np.asarray(data["direction"]), side), depth)
    if kind == "saucer_doubling":
        return GromovSeq(SaucerDoubling(side), depth)
    if kind == "axis_seq":
        return GromovSeq(AxisSeq(tuple(np.asarray(u) for u in data["directions"]), side), depth)
    if kind == "explicit":
        return GromovSeq(Explicit(tuple(spaces.point_from_json(p) for p in data["points"]), side), depth)
    raise SpaceError(f"unknown generator kind {kind}")


# ---------------------------------------------------------------------------
# Chains: Euclidean three-cone mediator


def _term_direction(space, p) -> np.ndarray:
    if isinstance(p, np.ndarray):
        return p / np.linalg.norm(p)
    if isinstance(p, PolarPoint):
        return p.u
    raise SpaceError("direction undefined")


def chain_euclidean(space: Euclidean, a: GromovSeq, b: GromovSeq, depth: Optional[int] = None,
                    threshold: Optional[float] = None) -> ChainCertificate:
    """Chain a ~ b in Euclidean dim >= 2, with at most one mediator.

    Tries the direct witness first; otherwise picks three directions on a
    great circle at pairwise angle >= 2pi/3, finds a cone of half-angle pi/3
    avoided by all retained terms of both sequences, and mediates through the
    opposite axis.  The witness threshold scales as k(2pi/3) * depth / 4."""
    if space.dim < 2:
        raise SpaceError("mediators need dim >= 2")
    depth = depth or min(a.depth, b.depth)
    threshold = threshold if threshold is not None else metric.angle_lemma_bound(2 * math.pi / 3) * depth / 4.0
    direct, achieved = e_witness(space, a, b, threshold, depth)
    if direct is not None:
        return ChainCertificate([a, b], [direct], {"route": "direct"})

    ta = realize(space, a)[:depth]
    tb = realize(space, b)[:depth]
    dirs = [_term_direction(space, p) for p in ta + tb]
    # great circle in the plane spanned by the first term directions
    u0 = dirs[0]
    v0 = None
    for cand in dirs[len(ta):] + dirs:
        w = cand - np.dot(cand, u0) * u0
        if np.linalg.norm(w) > 1e-9:
            v0 = w / np.linalg.norm(w)
            break
    if v0 is None:
        v0 = np.zeros(space.dim)
        v0[int(np.argmin(np.abs(u0)))] = 1.0
        v0 = v0 - np.dot(v0, u0) * u0
        v0 /= np.linalg.norm(v0)

    def cone_ok(axis):
        return all(metric.ambient_angle(d, axis) >= math.pi / 3 - 1e-12 for d in dirs)

    chosen = None
    for phase in np.linspace(0.0, 2 * math.pi / 3, 24, endpoint=False):
        for k in range(3):
            ang = phase + 2 * math.pi * k / 3
            axis = math.cos(ang) * u0 + math.sin(ang) * v0
            if cone_ok(axis):
                chosen = axis
                break
        if chosen is not None:
            break
    if chosen is None:
        raise UndecidedError("no cone of half-angle pi/3 avoided by every term")
    mediator = GromovSeq(RadialRay(-chosen, getattr(a.generator, "side", None)), depth)
    w1, ach1 = e_witness(space, a, mediator, threshold, depth)
    w2, ach2 = e_witness(space, mediator, b, threshold, depth)
    if w1 is None or w2 is None:
        raise UndecidedError(f"mediator witness undecided (achieved {ach1}, {ach2})")
    return ChainCertificate([a, mediator, b], [w1, w2], {"route": "three-cone", "axis": [float(v) for v in chosen]})


# ---------------------------------------------------------------------------
# Chains: staged axis selection in the flat saucer


def _fresh_circles(space: FlyingSaucer, used_coords: set) -> list:
    """Circle l spans coordinates (2l-1, 2l); fresh when both are unused."""
    out = []
    for l in range(1, space.dim // 2 + 1):
        c1, c2 = 2 * l - 1, 2 * l
        if c1 not in used_coords and c2 not in used_coords:
            out.append(l)
    return out


def _support_coords(p) -> set:
    if isinstance(p, np.ndarray):
        return set(int(j) + 1 for j in np.nonzero(np.abs(p) > 1e-9)[0])
    if isinstance(p, PolarPoint):
        return set(int(j) + 1 for j in np.nonzero(np.abs(p.u) > 1e-9)[0])
    raise SpaceError("no coordinate support")


def _in_double_cone(p, axis_coord: int) -> bool:
    """Whether the point's direction lies within pi/4 of the +-axis."""
    v = p if isinstance(p, np.ndarray) else p.u * p.t
    n = np.linalg.norm(v)
    if n < 1e-12:
        return False
    return abs(v[axis_coord - 1]) / n > math.cos(math.pi / 4) + 1e-12


def chain_saucer(space: FlyingSaucer, a: GromovSeq, b: GromovSeq, stages: int,
                 depth: Optional[int] = None, threshold: float = 1.0) -> ChainCertificate:
    """Chain a ~ z ~ b through a staged fresh-axis mediator.

    Stage m draws 2m+3 coordinate axes from unused circles (pairwise angle
    exactly pi/2 including sign flips); each retained point excludes at most
    one axis via its double cone of half-angle pi/4, so with 2m retained
    points at least three axes survive.  The surviving axis u_m keeps
    angle(u_m, w) in [pi/4, 3pi/4] for every retained term w, so the
    equal-norm reduction bounds each witness product below by
    k(3pi/4) * (tail norm).  Stage choices and retained index maps are
    recorded for audit."""
    depth = depth or min(a.depth, b.depth)
    ta = realize(space, a)[:depth]
    tb = realize(space, b)[:depth]
    used = set()
    for p in ta + tb:
        used |= _support_coords(p)

    keep_a = list(range(depth))
    keep_b = list(range(depth))
    axes = []
    log = []
    circles = _fresh_circles(space, used)
    ci = 0
    for m in range(1, stages + 1):
        need_axes = 2 * m + 3
        need_circles = (need_axes + 1) // 2
        if ci + need_circles > len(circles):
            raise TruncationExhaustedError(
                f"stage {m} needs {need_circles} fresh circles; only {len(circles) - ci} remain"
            )
        cand_axes = []
        for l in circles[ci : ci + need_circles]:
            cand_axes.extend([2 * l - 1, 2 * l])
        cand_axes = cand_axes[:need_axes]
        ci += need_circles

        retained_pts = [ta[i] for i in keep_a[:m]] + [tb[i] for i in keep_b[:m]]
        chosen = None
        for ax in cand_axes:
            if any(_in_double_cone(p, ax) for p in retained_pts):
                continue
            rest_a = [i for i in keep_a[m:] if not _in_double_cone(ta[i], ax)]
            rest_b = [i for i in keep_b[m:] if not _in_double_cone(tb[i], ax)]
            if len(rest_a) + m >= math.ceil(depth / 2) and len(rest_b) + m >= math.ceil(depth / 2):
                chosen = (ax, rest_a, rest_b)
                break
        if chosen is None:
            raise SpaceError("internal-invariant-violation: no admissible axis despite the 2m+3 count")
        ax, rest_a, rest_b = chosen
        keep_a = keep_a[:m] + rest_a
        keep_b = keep_b[:m] + rest_b
        axes.append(ax)
        log.append({"stage": m, "axis_coord": ax, "retained_a": list(keep_a), "retained_b": list(keep_b)})

    if stages > space.max_disk:
        raise TruncationExhaustedError("mediator terms exceed max_disk")
    dirs = []
    for m, ax in enumerate(axes, start=1):
        u = np.zeros(space.dim)
        u[ax - 1] = 1.0
        dirs.append(u)
    mediator = GromovSeq(AxisSeq(tuple(dirs), getattr(a.generator, "side", None)), len(dirs))

    sub_a = GromovSeq(Explicit(tuple(ta[i] for i in keep_a), getattr(a.generator, "side", None)), len(keep_a))
    sub_b = GromovSeq(Explicit(tuple(tb[i] for i in keep_b), getattr(b.generator, "side", None)), len(keep_b))
    w1, ach1 = e_witness(space, sub_a, mediator, threshold, min(len(keep_a), len(dirs)))
    w2, ach2 = e_witness(space, mediator, sub_b, threshold, min(len(keep_b), len(dirs)))
    if w1 is None or w2 is None:
        raise UndecidedError(f"staged mediator witness undecided (achieved {ach1}, {ach2})")
    return ChainCertificate(
        [a, mediator, b],
        [w1, w2],
        {"route": "staged-axes", "stages": log, "retained_a": keep_a, "retained_b": keep_b},
    )


def revalidate_witness(space, a: GromovSeq, b: GromovSeq, cert: DivergenceCertificate,
                       tol: float = 1e-6) -> bool:
    """Recompute the witness products with the distance oracle."""
    ta = realize(space, a)[: cert.depth]
    tb = realize(space, b)[: cert.depth]
    prods = _pairwise_products(space, ta, tb)
    N = cert.tail_index
    m = float(np.min(prods[N - 1 :, N - 1 :]))
    return m >= cert.threshold - tol and abs(m - cert.min_product) <= tol


def revalidate_chain(space, chain: ChainCertificate, tol: float = 1e-6) -> bool:
    if len(chain.links) != len(chain.witnesses) + 1:
        return False
    for i, w in enumerate(chain.witnesses):
        if not revalidate_witness(space, chain.links[i], chain.links[i + 1], w, tol):
            return False
    return True


# ---------------------------------------------------------------------------
# End trees


@dataclass
class Component:
    layer: int
    cid: int
    members: list  # indices into the tree's master sample list


@dataclass
class EndTree:
    space: object
    basepoint: object
    max_radius: int
    samples: list
    radii: np.ndarray
    layers: list  # layers[n] = list of Component (n = 0..max_radius)
    parents: dict  # (layer, cid) -> cid at layer-1
    edge_unknown: int = 0  # connector attempts blocked by truncation

    def components_at(self, n: int) -> list:
        return self.layers[n]


@dataclass
class EndCandidate:
    branch: tuple  # cid per layer 0..max_radius

    @property
    def end_id(self) -> str:
        return "end-" + "-".join(str(c) for c in self.branch)


def _connector_or_none(space, x, y, clearance):
    try:
        return sphere_connector(space, x, y, clearance)
    except TruncationExhaustedError:
        return "unknown"


def _euclid_shifted_connector(space: Euclidean, x, y, c, clearance: float):
    """Exact connector around an arbitrary Euclidean center."""
    shifted = sphere_connector(Euclidean(space.dim), x - c, y - c, clearance)
    if shifted is None:
        return None
    return Polyline([p + c for p in shifted.points])


def _comb_path_clears(space: CombTree, c: CombPoint, x: CombPoint, y: CombPoint, clearance: float) -> bool:
    """Exact min over the unique tree path of the distance to c."""
    d_c0 = spaces.comb_radial(c)

    def leg_min(seg: int, s0: float, s1: float) -> float:
        lo, hi = min(s0, s1), max(s0, s1)
        length = spaces.seg_length(seg)
        if seg == c.segment:
            s_near = min(max(c.s, lo), hi)
            return abs(s_near - c.s) * length
        return lo * length + d_c0

    if x.segment == y.segment:
        return leg_min(x.segment, x.s, y.s) > clearance
    m1 = leg_min(x.segment, x.s, 0.0)
    m2 = leg_min(y.segment, y.s, 0.0)
    return min(m1, m2) > clearance


def _outward_connector(space, x, y):
    """Constant-radius route pushed as deep as the truncation allows."""
    if isinstance(space, FlyingSaucer):
        cap = min(spaces.first_support(x), spaces.first_support(y), float(space.max_disk))
        xx = x * (cap / np.linalg.norm(x))
        yy = y * (cap / np.linalg.norm(y))
        inner = sphere_connector(space, xx, yy, cap / 2.0)
        if inner is None:
            return None
        pts = [x] + inner.points + [y]
        return Polyline(pts)
    if isinstance(space, HyperbolicSaucer):
        cap = min(spaces.first_support(x.u), spaces.first_support(y.u), float(space.max_disk))
        xx = PolarPoint(cap, x.u)
        yy = PolarPoint(cap, y.u)
        inner = sphere_connector(space, xx, yy, cap / 2.0)
        if inner is None:
            return None
        return Polyline([x] + inner.points + [y])
    return None


def _edge_ok(space, x, y, clearance: float, center, center_is_origin: bool):
    """Attempt a clearance-respecting connector around ``center``.

    Origin-centered trees use the connectors directly.  Shifted centers use
    exact constructions where available (Euclidean translation, comb path
    minimum) and otherwise validate candidate polylines vertex-by-vertex with
    exact distances to the center (conservative: a rejected candidate never
    merges components)."""
    if center_is_origin:
        poly = _connector_or_none(space, x, y, clearance)
        if poly == "unknown":
            return "unknown"
        return poly is not None
    if isinstance(space, Euclidean):
        return _euclid_shifted_connector(space, x, y, center, clearance) is not None
    if isinstance(space, CombTree):
        return _comb_path_clears(space, center, x, y, clearance)
    candidates = []
    try:
        out = _outward_connector(space, x, y)
        if out is not None:
            candidates.append(out)
    except (SpaceError, TruncationExhaustedError):
        pass
    try:
        std = _connector_or_none(space, x, y, 0.0)
        if std not in (None, "unknown"):
            candidates.append(std)
        elif std == "unknown" and not candidates:
            return "unknown"
    except SpaceError:
        pass
    for poly in candidates:
        ds = spaces.distance_many(space, poly.points, [center] * len(poly.points))
        if np.all(ds > clearance):
            return True
    return False


def _center_lower_bound(space, c, v) -> float:
    """Cheap lower bound on d(c, v): ambient model distance, and the radial
    difference, whichever is larger."""
    radial = abs(spaces.radial(space, v) - spaces.radial(space, c))
    if isinstance(space, (Euclidean, FlyingSaucer)):
        return max(radial, float(np.linalg.norm(np.asarray(c) - np.asarray(v))))
    if isinstance(space, (HyperbolicPlane, HyperbolicSaucer)):
        P = shorten.to_hyperboloid(c.t, c.u)
        Q = shorten.to_hyperboloid(v.t, v.u)
        return max(radial, float(shorten.stable_acosh1p(shorten.lorentz_gram(P, Q))))
    if isinstance(space, CombTree):
        return spaces.distance(space, c, v, validate=False)
    if isinstance(space, Wedge):
        if c.side == v.side:
            sub = space.left if c.side == "left" else space.right
            return _center_lower_bound(sub, c.native, v.native)
        return spaces.distance(space, c, v, validate=False)
    return radial


def end_tree(space, basepoint, max_radius: int, seed: int, samples_per_layer: int,
             master_samples: Optional[list] = None) -> EndTree:
    """Layered components of sampled points outside closed balls.

    One master sample set covers all layers; the layer-n skeleton is the
    subset with radial coordinate > n, with edges requiring a connecting
    polyline of clearance n.  Edges only merge when a connector validates, so
    unknown edges over-count components rather than invent ends."""
    o = spaces.origin_of(space)
    center_is_origin = spaces.distance(space, basepoint, o, validate=False) <= 1e-9
    if master_samples is None:
        master_samples = []
        for n in range(max_radius + 1):
            lo, hi = n + 1e-6, n + 1.0
            try:
                master_samples.extend(spaces.sample(space, int(stream(seed, n, 11).integers(0, 2**63 - 1)),
                                                    (lo, hi), samples_per_layer))
            except spaces.EmptyFeasibleRegionError:
                continue
    if center_is_origin:
        radii = np.array([spaces.radial(space, p) for p in master_samples])
    else:
        radii = np.array([spaces.distance(space, basepoint, p, validate=False) for p in master_samples])

    layers: list = [[] for _ in range(max_radius + 1)]
    parents: dict = {}
    unknown_edges = 0
    next_cid = 0
    prev_assign: dict = {}

    for n in range(max_radius, -1, -1):
        idx = [i for i in range(len(master_samples)) if radii[i] > n + 1e-12]
        order = sorted(idx, key=lambda i: -radii[i])
        comp_of: dict = {}
        comps: list = []
        # components at layer n+1 stay connected at clearance n
        if n < max_radius:
            carried = {}
            for comp in layers[n + 1]:
                cid = next_cid
                next_cid += 1
                comps.append(Component(n, cid, list(comp.members)))
                carried[comp.cid] = cid
                for i in comp.members:
                    comp_of[i] = cid
                parents[(n + 1, comp.cid)] = cid
        for i in order:
            if i in comp_of:
                continue
            placed = False
            for comp in comps:
                # try the deepest few members
                for j in sorted(comp.members, key=lambda k: -radii[k])[:8]:
                    verdict = _edge_ok(space, master_samples[i], master_samples[j], float(n),
                                       basepoint, center_is_origin)
                    if verdict == "unknown":
                        unknown_edges += 1
                        continue
                    if verdict:
                        comp.members.append(i)
                        comp_of[i] = comp.cid
                        placed = True
                        break
                if placed:
                    break
            if not placed:
                cid = next_cid
                next_cid += 1
                comps.append(Component(n, cid, [i]))
                comp_of[i] = cid
        layers[n] = comps
    tree = EndTree(space, basepoint, max_radius, master_samples, radii, layers, parents, unknown_edges)
    return tree


def ends(tree: EndTree):
    """Maximal branches reaching the top layer, plus branches dying early."""
    candidates = []
    for comp in tree.layers[tree.max_radius]:
        branch = [comp.cid]
        cur = comp.cid
        for n in range(tree.max_radius, 0, -1):
            cur = tree.parents[(n, cur)]
            branch.append(cur)
        candidates.append(EndCandidate(tuple(reversed(branch))))
    dead = []
    child_cids = {tree.parents[(n + 1, c.cid)] for n in range(tree.max_radius) for c in tree.layers[n + 1]}
    for n in range(tree.max_radius):
        for comp in tree.layers[n]:
            if comp.cid not in child_cids:
                dead.append({"terminal_layer": n, "cid": comp.cid, "size": len(comp.members)})
    return candidates, dead


def locate_in_layer(tree: EndTree, point, n: int) -> Optional[int]:
    """Component id of the layer-n component a point connects into."""
    space = tree.space
    center_is_origin = spaces.distance(space, tree.basepoint, spaces.origin_of(space), validate=False) <= 1e-9
    for comp in tree.layers[n]:
        for j in sorted(comp.members, key=lambda k: -tree.radii[k])[:8]:
            verdict = _edge_ok(space, point, tree.samples[j], float(n), tree.basepoint, center_is_origin)
            if verdict is True:
                return comp.cid
    return None


def branch_of(tree: EndTree, cids_by_layer: dict) -> Optional[EndCandidate]:
    """Candidate whose branch passes through the located components."""
    cands, _ = ends(tree)
    for cand in cands:
        if all(cand.branch[n] == cid for n, cid in cids_by_layer.items()):
            return cand
    return None


# ---------------------------------------------------------------------------
# Natural maps


def map_nu(space, ray: Ray, threshold: float = DEFAULT_THRESHOLD, depth: int = 16):
    """Divergence-class image of a ray: the radial sequence along it, with a
    certificate; bounded rays have no image (a typed error, and a datum)."""
    if ray_bound(space, ray) < depth:
        raise BoundedRayError("no divergence-class image: ray is not infinite")
    seq = GromovSeq(RadialRay(ray.direction, ray.side), depth)
    cert = gromov_certificate(space, seq, threshold, depth)
    if cert is None:
        raise UndecidedError("radial sequence did not certify at this depth")
    return seq, cert


def map_phi(space, seq: GromovSeq, tree: EndTree):
    """End containing the sequence tail: per layer, the component holding all
    realized terms past the layer's tail; undecided if the tail splits."""
    terms = realize(space, seq)
    o = spaces.origin_of(space)
    radii = spaces.distance_many(space, terms, [o] * len(terms))
    located = {}
    for n in range(tree.max_radius + 1):
        tail = [terms[i] for i in range(len(terms)) if radii[i] > n + 1e-9]
        if not tail:
            raise UndecidedError(f"no realized terms beyond layer {n}")
        cids = set()
        for p in tail:
            cid = locate_in_layer(tree, p, n)
            if cid is None:
                raise UndecidedError(f"sampling too sparse to locate a tail term at layer {n}")
            cids.add(cid)
        if len(cids) != 1:
            raise UndecidedError(f"tail splits across components at layer {n}")
        located[n] = cids.pop()
    cand = branch_of(tree, located)
    if cand is None:
        raise UndecidedError("located components do not lie on a surviving branch")
    return cand.end_id


def map_eps(space, ray: Ray, tree: EndTree):
    """End of a ray: the branch through the components containing ray(n+1)."""
    if ray_bound(space, ray) < tree.max_radius + 1:
        raise BoundedRayError("end image undefined: ray is not infinite")
    located = {}
    for n in range(tree.max_radius + 1):
        p = ray_point(space, ray, float(n + 1))
        cid = locate_in_layer(tree, p, n)
        if cid is None:
            raise UndecidedError(f"cannot locate ray({n + 1}) at layer {n}")
        located[n] = cid
    cand = branch_of(tree, located)
    if cand is None:
        raise UndecidedError("ray components do not lie on a surviving branch")
    return cand.end_id


def commutativity_check(space, rays: list, tree: EndTree, threshold: float = DEFAULT_THRESHOLD,
                        depth: int = 16) -> dict:
    """Checks end-of-ray = end-of-(divergence class of ray) for each ray."""
    agree, violations, undecided = 0, [], 0
    for i, ray in enumerate(rays):
        try:
            eps_end = map_eps(space, ray, tree)
            seq, _ = map_nu(space, ray, threshold, depth)
            phi_end = map_phi(space, seq, tree)
        except (UndecidedError, BoundedRayError):
            undecided += 1
            continue
        if eps_end == phi_end:
            agree += 1
        else:
            violations.append({"ray": i, "eps": eps_end, "phi": phi_end})
    return {"total": len(rays), "agree": agree, "violations": violations, "undecided": undecided}


def basepoint_independence(space, o1, o2, max_radius: int, seed: int = 0,
                           samples_per_layer: int = 40) -> dict:
    """Builds end trees at both basepoints over one master sample set and
    verifies layer-n components at o1 embed in unique layer-m components at
    o2 whenever n - m > d(o1, o2); reports the induced branch matching."""
    d12 = spaces.distance(space, o1, o2, validate=False)
    tree1 = end_tree(space, o1, max_radius, seed, samples_per_layer)
    tree2 = end_tree(space, o2, max_radius, seed, samples_per_layer, master_samples=tree1.samples)
    shift = math.ceil(d12 + 1e-9) + 1
    checks, failures = 0, []
    for n in range(shift, max_radius + 1):
        m = n - shift
        comp2_of = {}
        for comp in tree2.layers[m]:
            for i in comp.members:
                comp2_of[i] = comp.cid
        for comp in tree1.layers[n]:
            targets = {comp2_of.get(i) for i in comp.members}
            targets.discard(None)
            checks += 1
            if len(targets) > 1:
                failures.append({"layer_n": n, "layer_m": m, "cid": comp.cid, "targets": sorted(targets)})
    ends1, _ = ends(tree1)
    ends2, _ = ends(tree2)
    # Branch matching via the deepest mapped layer
    matching = []
    if max_radius >= shift:
        m = max_radius - shift
        comp2_of = {}
        for comp in tree2.layers[m]:
            for i in comp.members:
                comp2_of[i] = comp.cid
        for cand in ends1:
            top = next(c for c in tree1.layers[max_radius] if c.cid == cand.branch[max_radius])
            images = {comp2_of.get(i) for i in top.members}
            images.discard(None)
            matching.append({"end": cand.end_id, "image_components": sorted(images)})
    return {
        "d_basepoints": d12,
        "containment_checks": checks,
        "containment_failures": failures,
        "ends_at_o1": len(ends1),
        "ends_at_o2": len(ends2),
        "bijection": len(ends1) == len(ends2) and not failures,
        "matching": matching,
    }
