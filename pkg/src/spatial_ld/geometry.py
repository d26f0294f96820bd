"""Geometric primitives and volume engines.

Points are plain ``numpy`` arrays of shape ``(d,)``; collections of points are
arrays of shape ``(m, d)``. Balls and lenses are closed sets, so membership
predicates here are deterministic on boundaries. Volume engines live at the
bottom of the module: an adaptive quadtree for ``d = 2`` and plain Monte Carlo
for any dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "Box",
    "disk_components",
    "disk_union_area",
    "disk_union_quadrature",
    "Cone",
    "Region",
    "VolumeEstimate",
    "ball_volume",
    "angle_at",
    "lens_centres",
    "lens_blocked",
    "lens_disks",
    "lens_contains",
    "lens_interior_contains",
    "disk_union_region",
    "region_volume_quadrature",
    "region_volume_mc",
    "unit_ball_samples",
    "ball_union_volume",
    "cone_cover",
    "cube",
    "exact_distances",
]


def exact_distances(points: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Euclidean distances from every row of ``points`` to ``x``.

    The coordinate sum is accumulated in a fixed order so that the same pair
    always produces the same bits, whichever array it sits in. The graph
    oracles depend on this.
    """
    points = np.asarray(points, dtype=float)
    diff = points - x
    sq = diff[..., 0] * diff[..., 0]
    for j in range(1, diff.shape[-1]):
        sq = sq + diff[..., j] * diff[..., j]
    return np.sqrt(sq)


@dataclass(frozen=True)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError("box corners must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise ValueError("box corners must be finite")
        if np.any(lower > upper):
            raise ValueError("box requires lower <= upper in every coordinate")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        return np.all((points >= self.lower) & (points <= self.upper), axis=1)

    def inflate(self, rel: float = 0.0, absolute: float = 0.0) -> "Box":
        pad = 0.5 * rel * self.widths + absolute
        return Box(self.lower - pad, self.upper + pad)


def cube(side: float, dim: int) -> Box:
    """The centred cube ``[-side/2, side/2]^dim``."""
    half = 0.5 * float(side)
    return Box(np.full(dim, -half), np.full(dim, half))


def ball_volume(d: int, r: float = 1.0) -> float:
    """Volume of a ``d``-dimensional ball of radius ``r``."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if r < 0:
        raise ValueError("radius must be nonnegative")
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * r**d


def angle_at(x, y, z) -> float:
    """Absolute angle of the triangle ``x, y, z`` at the vertex ``y``."""
    x, y, z = (np.asarray(v, dtype=float) for v in (x, y, z))
    u, v = x - y, z - y
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("angle undefined: a leg of the triangle is degenerate")
    c = float(np.dot(u, v) / (nu * nv))
    return math.acos(min(1.0, max(-1.0, c)))


def lens_centres(a: np.ndarray, b: np.ndarray, beta: float):
    """Disk centres ``(m, 2, 2)`` and radii ``(m,)`` of the lenses ``C(a, b_j)``.

    ``a`` is one point or an ``(m, 2)`` array; ``b`` is ``(m, 2)``.
    """
    v = b - a
    length = np.sqrt(v[:, 0] * v[:, 0] + v[:, 1] * v[:, 1])
    if np.any(length == 0):
        raise ValueError("lens endpoints coincide")
    mid = 0.5 * (a + b)
    normal = np.column_stack([-v[:, 1], v[:, 0]]) / length[:, None]
    offset = 0.5 * length * np.sqrt(beta * beta - 1.0)
    centres = np.stack([mid + offset[:, None] * normal, mid - offset[:, None] * normal], axis=1)
    return centres, 0.5 * beta * length


def lens_blocked(centres: np.ndarray, radii: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``(m, q)`` mask: is ``w_q`` strictly inside lens ``m``?"""
    r2 = (radii * radii)[:, None]
    hit = np.zeros((len(radii), len(w)), dtype=bool)
    for s in range(2):
        dx = w[None, :, 0] - centres[:, s, 0][:, None]
        dy = w[None, :, 1] - centres[:, s, 1][:, None]
        hit |= dx * dx + dy * dy < r2
    return hit


def lens_disks(e1, e2, beta: float):
    """Centres and common radius of the two disks forming the lens ``C(e1, e2)``.

    Both disks have radius ``beta * |e1 - e2| / 2`` and pass through ``e1`` and
    ``e2``. For ``beta = 1`` the two centres coincide with the midpoint.
    """
    if beta < 1:
        raise ValueError("beta must be >= 1")
    e1 = np.asarray(e1, dtype=float)
    e2 = np.asarray(e2, dtype=float).reshape(1, 2)
    centres, radii = lens_centres(e1, e2, beta)
    return centres[0], float(radii[0])


def lens_contains(e1, e2, beta: float, y) -> bool:
    """Closed-lens membership: is ``y`` in the union of the two lens disks?"""
    centres, radius = lens_disks(e1, e2, beta)
    d = exact_distances(centres, np.asarray(y, dtype=float))
    return bool(np.any(d <= radius))


def lens_interior_contains(e1, e2, beta: float, ys: np.ndarray) -> np.ndarray:
    """Open-lens membership for the rows of ``ys``."""
    if beta < 1:
        raise ValueError("beta must be >= 1")
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    centres, radii = lens_centres(np.asarray(e1, dtype=float), np.asarray(e2, dtype=float).reshape(1, 2), beta)
    return lens_blocked(centres, radii, ys)[0]


@dataclass(frozen=True)
class Cone:
    apex: np.ndarray
    axis: np.ndarray
    half_angle: float

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float)
        norm = np.linalg.norm(axis)
        if norm == 0:
            raise ValueError("cone axis must be nonzero")
        if not 0 < self.half_angle < math.pi / 2:
            raise ValueError("half angle must lie in (0, pi/2)")
        object.__setattr__(self, "axis", axis / norm)
        object.__setattr__(self, "apex", np.asarray(self.apex, dtype=float))

    def contains(self, ys: np.ndarray) -> np.ndarray:
        """Membership for the rows of ``ys``; the apex itself belongs to the cone."""
        ys = np.atleast_2d(np.asarray(ys, dtype=float))
        rel = ys - self.apex
        norms = np.linalg.norm(rel, axis=1)
        out = norms == 0
        nz = ~out
        cosang = (rel[nz] @ self.axis) / norms[nz]
        # closed cone; tiny slack keeps boundary rays inside
        out[nz] = cosang >= math.cos(self.half_angle) - 1e-15
        return out

    def boundary_directions(self) -> np.ndarray:
        """Unit directions of the lateral boundary (defined for ``d <= 2``)."""
        d = self.axis.shape[0]
        if d == 1:
            return self.axis[None, :]
        if d != 2:
            raise NotImplementedError("boundary rays are only enumerated for d <= 2")
        base = math.atan2(self.axis[1], self.axis[0])
        angles = np.array([base - self.half_angle, base + self.half_angle])
        return np.column_stack([np.cos(angles), np.sin(angles)])


def cone_cover(d: int, half_angle: float = math.pi / 8, offset: float = 0.1) -> list:
    """Cones with apex 0 whose union is ``R^d``.

    In the plane the cones are ``pi / half_angle`` equal sectors whose edges sit
    at ``offset + 2 * half_angle * i``. No edge may be axis-parallel; an offset
    that would produce one is rejected. On the line the result is the two
    half-lines and ``offset`` is ignored.
    """
    if d == 1:
        return [Cone(np.zeros(1), np.array([1.0]), math.pi / 4),
                Cone(np.zeros(1), np.array([-1.0]), math.pi / 4)]
    if d != 2:
        raise NotImplementedError("cone covers are only constructed for d in {1, 2}")
    count = math.pi / half_angle
    if abs(count - round(count)) > 1e-9:
        raise ValueError("pi / half_angle must be an integer")
    count = int(round(count))
    edges = offset + 2 * half_angle * np.arange(count)
    quarter = np.mod(edges, math.pi / 2)
    if np.any(np.minimum(quarter, math.pi / 2 - quarter) < 1e-9):
        raise ValueError("offset makes a sector boundary parallel to a coordinate axis")
    axes = edges + half_angle
    return [Cone(np.zeros(2), np.array([math.cos(a), math.sin(a)]), half_angle) for a in axes]


@dataclass
class Region:
    """A bounded set given by a vectorised membership predicate.

    ``membership`` maps an ``(m, d)`` array to a boolean ``(m,)`` array.
    ``sdf`` is an optional conservative signed-distance hint: negative inside,
    positive outside, and never larger in magnitude than the true distance to
    the boundary.
    """

    membership: Callable[[np.ndarray], np.ndarray]
    bounding_box: Box
    sdf: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @property
    def dim(self) -> int:
        return self.bounding_box.dim

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        inside = np.asarray(self.membership(points), dtype=bool)
        return inside & self.bounding_box.contains(points)


@dataclass
class VolumeEstimate:
    value: float
    std_error: float
    method: str
    samples_or_depth: int
    bracket: float = 0.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.value < 0 or self.std_error < 0:
            raise ValueError("volume estimates are nonnegative")
        if self.method not in ("quadrature", "monte_carlo", "closed_form"):
            raise ValueError(f"unknown method tag {self.method!r}")
        if self.method == "quadrature" and self.std_error != 0:
            raise ValueError("quadrature estimates carry no standard error")

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "std_error": self.std_error,
            "method": self.method,
            "samples_or_depth": self.samples_or_depth,
            "bracket": self.bracket,
        }


def disk_union_region(centres: np.ndarray, radii: Sequence[float], box: Optional[Box] = None) -> Region:
    """Region for a union of open balls, with an exact-outside SDF hint."""
    centres = np.atleast_2d(np.asarray(centres, dtype=float))
    radii = np.asarray(radii, dtype=float).reshape(-1)
    d = centres.shape[1]
    if box is None:
        if len(radii) == 0:
            box = Box(np.zeros(d), np.zeros(d))
        else:
            box = Box((centres - radii[:, None]).min(axis=0), (centres + radii[:, None]).max(axis=0))
    r2 = radii * radii

    def membership(pts):
        pts = np.atleast_2d(pts)
        inside = np.zeros(pts.shape[0], dtype=bool)
        for c, rr in zip(centres, r2):
            diff = pts - c
            sq = diff[:, 0] * diff[:, 0]
            for j in range(1, d):
                sq = sq + diff[:, j] * diff[:, j]
            inside |= sq < rr
        return inside

    def sdf(pts):
        pts = np.atleast_2d(pts)
        if len(radii) == 0:
            return np.full(pts.shape[0], np.inf)
        dist = np.sqrt(((pts[:, None, :] - centres[None, :, :]) ** 2).sum(axis=2))
        return (dist - radii[None, :]).min(axis=1)

    return Region(membership, box, sdf)


_SUB = 4  # midpoint sub-grid per unresolved cell, per axis


def region_volume_quadrature(region: Region, rel_tol: float = 1e-3, max_depth: int = 12,
                             min_depth: int = 3) -> VolumeEstimate:
    """Adaptive quadtree area of a planar region.

    Cells are classified with the region's SDF hint when present (a cell is
    settled once its centre is farther from the boundary than its
    half-diagonal); otherwise by sampling the four corners and the centre,
    trusted only from ``min_depth`` on. Unsettled cells are split until their
    total area, the reported ``bracket``, drops below ``rel_tol`` times the
    running estimate or ``max_depth`` is reached. Unsettled cells contribute
    the covered fraction of a midpoint sub-grid, so ``value`` always lies in
    ``[settled, settled + bracket]``.
    """
    if region.dim != 2:
        raise ValueError("quadrature is only supported in two dimensions")
    box = region.bounding_box
    size = box.widths.copy()
    if box.volume == 0:
        return VolumeEstimate(0.0, 0.0, "quadrature", 0, 0.0)

    lows = box.lower[None, :].copy()
    settled = 0.0
    depth = 0
    sub = (np.arange(_SUB) + 0.5) / _SUB
    sub_offsets = np.stack(np.meshgrid(sub, sub, indexing="ij"), axis=-1).reshape(-1, 2)
    corner_offsets = np.array([[0, 0], [1, 0], [0, 1], [1, 1], [0.5, 0.5]])

    while True:
        cell_area = float(size[0] * size[1])
        if region.sdf is not None:
            centres = lows + 0.5 * size
            s = region.sdf(centres)
            half_diag = 0.5 * float(np.hypot(size[0], size[1]))
            inside = s < -half_diag
            outside = s > half_diag
        else:
            pts = (lows[:, None, :] + corner_offsets[None, :, :] * size).reshape(-1, 2)
            hits = region(pts).reshape(-1, 5)
            if depth >= min_depth:
                inside = hits.all(axis=1)
                outside = ~hits.any(axis=1)
            else:
                inside = np.zeros(len(lows), dtype=bool)
                outside = np.zeros(len(lows), dtype=bool)
        settled += cell_area * int(inside.sum())
        lows = lows[~(inside | outside)]
        bracket = cell_area * len(lows)
        if len(lows) == 0:
            partial = 0.0
        else:
            pts = (lows[:, None, :] + sub_offsets[None, :, :] * size).reshape(-1, 2)
            partial = cell_area * float(region(pts).mean()) * len(lows)
        estimate = settled + partial
        if len(lows) == 0 or depth >= max_depth or (estimate > 0 and bracket <= rel_tol * estimate):
            return VolumeEstimate(estimate, 0.0, "quadrature", depth, bracket)
        size = 0.5 * size
        lows = np.concatenate([
            lows,
            lows + [size[0], 0.0],
            lows + [0.0, size[1]],
            lows + size,
        ])
        depth += 1


def region_volume_mc(region: Region, samples: int, seed, chunk: int = 1 << 18) -> VolumeEstimate:
    """Hit-or-miss Monte Carlo volume over the region's bounding box.

    ``seed`` is a :class:`spatial_ld.point_process.Seed` (or anything with an
    ``rng()`` method returning a ``numpy`` Generator).
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    box = region.bounding_box
    rng = seed.rng()
    hits = 0
    left = samples
    while left > 0:
        m = min(chunk, left)
        pts = box.lower + box.widths * rng.random((m, box.dim))
        hits += int(np.count_nonzero(region(pts)))
        left -= m
    p = hits / samples
    vol = box.volume
    return VolumeEstimate(vol * p, vol * math.sqrt(p * (1 - p) / samples), "monte_carlo", samples)


def unit_ball_samples(rng: np.random.Generator, samples: int, d: int) -> np.ndarray:
    """Uniform points in the closed unit ball of ``R^d``."""
    g = rng.standard_normal((samples, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * rng.random((samples, 1)) ** (1.0 / d)


def ball_union_volume(centres: np.ndarray, radii: Sequence[float], unit: np.ndarray) -> VolumeEstimate:
    """Volume of a union of open balls from shared unit-ball samples.

    Each ball is sampled through ``c + r * unit`` and a sample is weighted by
    one over the number of balls covering it, so every point of the union is
    counted once in expectation. Unlike hit-or-miss over a bounding box the
    estimate cannot collapse when the balls are small and far apart, and
    passing the same ``unit`` array gives common random numbers.
    """
    centres = np.atleast_2d(np.asarray(centres, dtype=float))
    radii = np.asarray(radii, dtype=float).reshape(-1)
    n = len(unit)
    if len(radii) == 0 or n == 0:
        return VolumeEstimate(0.0, 0.0, "monte_carlo", n)
    d = centres.shape[1]
    total, var = 0.0, 0.0
    r2 = radii * radii
    for c, r in zip(centres, radii):
        if r <= 0:
            continue
        pts = c + r * unit
        cover = np.zeros(n)
        for c2, rr in zip(centres, r2):
            cover += ((pts - c2) ** 2).sum(axis=1) < rr
        w = 1.0 / np.maximum(cover, 1.0)
        vol = ball_volume(d, r)
        total += vol * w.mean()
        var += vol * vol * w.var() / n
    return VolumeEstimate(total, math.sqrt(var), "monte_carlo", n)


def disk_components(centres: np.ndarray, radii: Sequence[float]) -> list:
    """Index arrays of the groups of overlapping balls (connected components)."""
    centres = np.atleast_2d(np.asarray(centres, dtype=float))
    radii = np.asarray(radii, dtype=float).reshape(-1)
    m = len(radii)
    parent = list(range(m))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(m):
        gap = np.sqrt(((centres[i + 1:] - centres[i]) ** 2).sum(axis=1)) - radii[i + 1:] - radii[i]
        for j in np.flatnonzero(gap < 0) + i + 1:
            parent[find(int(j))] = find(i)
    roots = np.array([find(i) for i in range(m)], dtype=int)
    return [np.flatnonzero(roots == r) for r in np.unique(roots)]


def _local_components(centres, radii):
    # each overlap group shifted to its own origin: far-apart groups would
    # otherwise lose all precision to cancellation in the boundary integral
    centres = np.atleast_2d(np.asarray(centres, dtype=float))
    radii = np.asarray(radii, dtype=float).reshape(-1)
    keep = radii > 0
    centres, radii = centres[keep], radii[keep]
    for idx in disk_components(centres, radii):
        c, r = centres[idx], radii[idx]
        mid = 0.5 * ((c - r[:, None]).min(axis=0) + (c + r[:, None]).max(axis=0))
        yield c - mid, r


def disk_union_area(centres: np.ndarray, radii: Sequence[float]) -> float:
    """Exact area of a union of planar disks.

    Integrates ``(x dy - y dx) / 2`` along the boundary arcs that no other
    disk covers, one overlap group at a time in local coordinates. Disks
    swallowed by another disk (or repeated) contribute no arcs.
    """
    centres = np.atleast_2d(np.asarray(centres, dtype=float))
    if len(centres) and centres.shape[1] != 2:
        raise ValueError("disk unions are planar")
    return float(sum(_arc_area(c, r) for c, r in _local_components(centres, radii)))


def disk_union_quadrature(centres: np.ndarray, radii: Sequence[float], rel_tol: float = 1e-3,
                          max_depth: int = 12) -> VolumeEstimate:
    """Quadtree area of a planar disk union, one overlap group at a time.

    Values and brackets add over the groups, so far-apart groups neither
    inflate the box nor the bracket.
    """
    value = bracket = 0.0
    depth = 0
    for c, r in _local_components(centres, radii):
        q = region_volume_quadrature(disk_union_region(c, r), rel_tol, max_depth)
        value, bracket, depth = value + q.value, bracket + q.bracket, max(depth, q.samples_or_depth)
    return VolumeEstimate(value, 0.0, "quadrature", depth, bracket)


def _arc_area(centres: np.ndarray, radii: np.ndarray) -> float:
    m = len(radii)
    diff = centres[None, :, :] - centres[:, None, :]
    dist = np.sqrt(diff[..., 0] ** 2 + diff[..., 1] ** 2)
    two_pi = 2 * math.pi
    total = 0.0
    for i in range(m):
        ri = radii[i]
        covered = []
        swallowed = False
        for j in range(m):
            if j == i:
                continue
            d, rj = dist[i, j], radii[j]
            if d + ri <= rj:
                # i lies inside j; equal radii here mean a duplicate up to
                # rounding, kept once, by index
                if rj == ri and j > i:
                    continue
                swallowed = True
                break
            if d >= ri + rj or d + rj <= ri:
                continue
            a = math.atan2(diff[i, j, 1], diff[i, j, 0])
            w = math.acos(max(-1.0, min(1.0, (ri * ri + d * d - rj * rj) / (2 * ri * d))))
            lo = (a - w) % two_pi
            hi = lo + 2 * w
            if hi > two_pi:
                covered.append((lo, two_pi))
                covered.append((0.0, hi - two_pi))
            else:
                covered.append((lo, hi))
        if swallowed:
            continue
        covered.sort()
        free = []
        cursor = 0.0
        for lo, hi in covered:
            if lo > cursor:
                free.append((cursor, lo))
            cursor = max(cursor, hi)
        if cursor < two_pi:
            free.append((cursor, two_pi))
        cx, cy = centres[i]
        for t1, t2 in free:
            total += 0.5 * (ri * ri * (t2 - t1)
                            + ri * (cx * (math.sin(t2) - math.sin(t1)) - cy * (math.cos(t2) - math.cos(t1))))
    return total
