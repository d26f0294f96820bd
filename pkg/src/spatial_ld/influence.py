"""Influence zones: where an inserted point deletes an out-edge of a protected node.

A pair ``(phi, psi)`` is a point configuration ``psi`` with a marked subset
``phi`` (given by indices). Protected nodes are ``phi`` together with the
out-neighbours of ``phi``. A location ``y`` is in the zone when inserting it
removes at least one out-edge of a protected node.

For kNN that happens exactly when ``y`` ranks ahead of the current k-th
neighbour of some protected node (distance first, then coordinates), so the
zone is a union of open balls up to a null set. For beta-skeletons it happens
when ``y`` lies strictly inside the lens of an edge at a protected node, so the
zone is a union of open lens disks. Both give an exact SDF for quadrature;
the Monte Carlo route uses the membership predicate instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import (Box, Region, VolumeEstimate, disk_union_area, disk_union_quadrature, disk_union_region,
                       exact_distances, lens_blocked, lens_centres, region_volume_mc)
from .graphs import GraphModel, out_arrays
from .point_process import PointConfig, Seed
from .scores import ScoreVariant, _scores_from_csr

__all__ = [
    "ConfigPair",
    "InfluenceEstimate",
    "protected_nodes",
    "zone_disks",
    "zone_membership",
    "in_influence_zone",
    "in_influence_zone_recompute",
    "influence_bounding",
    "influence_volume",
    "nng_reduced_disks",
    "phi_score_sum",
]


@dataclass
class ConfigPair:
    phi: np.ndarray
    psi: PointConfig
    model: GraphModel
    variant: ScoreVariant = ScoreVariant("dir", 1.0)

    def __post_init__(self):
        if not isinstance(self.psi, PointConfig):
            self.psi = PointConfig(self.psi)
        phi = np.unique(np.asarray(self.phi, dtype=int).reshape(-1))
        if len(phi) and (phi[0] < 0 or phi[-1] >= len(self.psi)):
            raise ValueError("phi indices must refer to points of psi")
        self.phi = phi
        if self.psi.dim != self.model.dim:
            raise ValueError("pair and model dimensions differ")
        self._csr = None

    @property
    def csr(self):
        if self._csr is None:
            self._csr = out_arrays(self.psi.points, self.model, method="brute")
        return self._csr

    def scaled(self, t: float) -> "ConfigPair":
        return ConfigPair(self.phi, self.psi.scaled(t), self.model, self.variant)

    def to_dict(self) -> dict:
        return {"phi": self.phi.tolist(), "psi": self.psi.points.tolist(),
                "model": self.model.to_dict(), "variant": self.variant.to_dict()}


@dataclass
class InfluenceEstimate:
    volume: VolumeEstimate
    bounding: Box
    protected_nodes: frozenset

    def to_dict(self) -> dict:
        return {"volume": self.volume.to_dict(), "bounding": [self.bounding.lower.tolist(),
                self.bounding.upper.tolist()], "protected_nodes": sorted(self.protected_nodes)}


def phi_score_sum(pair: ConfigPair) -> float:
    """Combined score of the marked nodes inside ``psi``."""
    indptr, indices = pair.csr
    scores = _scores_from_csr(pair.psi.points, indptr, indices, pair.variant)
    return float(scores[pair.phi].sum()) if len(pair.phi) else 0.0


def protected_nodes(pair: ConfigPair) -> frozenset:
    indptr, indices = pair.csr
    nodes = set(pair.phi.tolist())
    for x in pair.phi:
        nodes.update(indices[indptr[x]:indptr[x + 1]].tolist())
    return frozenset(nodes)


def _protected_edges(pair: ConfigPair):
    """Beta-skeleton edges ``(i, j)`` with ``i < j`` touching a protected node."""
    indptr, indices = pair.csr
    prot = protected_nodes(pair)
    edges = set()
    for x in prot:
        for z in indices[indptr[x]:indptr[x + 1]].tolist():
            edges.add((min(x, z), max(x, z)))
    return sorted(edges)


def _knn_cut(pair: ConfigPair):
    """Protected nodes with their k-th neighbour index and distance."""
    indptr, indices = pair.csr
    pts = pair.psi.points
    rows = []
    for x in sorted(protected_nodes(pair)):
        out = indices[indptr[x]:indptr[x + 1]]
        if len(out) < pair.model.k:
            continue  # fewer than k other nodes: an insertion only adds edges
        d = exact_distances(pts[out], pts[x])
        # k-th neighbour is the last in (distance, coordinates) order
        order = np.lexsort([pts[out][:, j] for j in range(pts.shape[1] - 1, -1, -1)] + [d])
        last = out[order[-1]]
        rows.append((x, int(last), float(d[order[-1]])))
    return rows


def zone_disks(pair: ConfigPair):
    """Centres ``(m, d)`` and radii ``(m,)`` of the open disks whose union is the zone."""
    pts = pair.psi.points
    if pair.model.kind == "knn":
        rows = _knn_cut(pair)
        if not rows:
            return np.zeros((0, pts.shape[1])), np.zeros(0)
        return pts[[r[0] for r in rows]], np.array([r[2] for r in rows])
    edges = _protected_edges(pair)
    if not edges:
        return np.zeros((0, 2)), np.zeros(0)
    e = np.array(edges)
    centres, radii = lens_centres(pts[e[:, 0]], pts[e[:, 1]], pair.model.beta)
    return centres.reshape(-1, 2), np.repeat(radii, 2)


def nng_reduced_disks(pair: ConfigPair):
    """Balls ``B_{D_1}(x)`` around the marked nodes only (the NNG reduced objective)."""
    if not pair.model.is_nng:
        raise NotImplementedError("the reduced ball objective is defined for the nearest-neighbour graph only")
    indptr, indices = pair.csr
    pts = pair.psi.points
    phi = [x for x in pair.phi if indptr[x + 1] > indptr[x]]
    if not phi:
        return np.zeros((0, pts.shape[1])), np.zeros(0)
    nb = np.array([indices[indptr[x]] for x in phi])
    return pts[phi], exact_distances(pts[nb], pts[phi])


def zone_membership(pair: ConfigPair, ys: np.ndarray) -> np.ndarray:
    """Vectorised zone predicate by local re-query of the protected out sets."""
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    pts = pair.psi.points
    hit = np.zeros(len(ys), dtype=bool)
    if pair.model.kind == "knn":
        d = pts.shape[1]
        for x, last, dk in _knn_cut(pair):
            dy = exact_distances(ys, pts[x])
            ahead = dy < dk
            tie = dy == dk
            if tie.any():
                # equal distance: the lexicographically smaller point wins
                p = pts[last]
                for i in np.flatnonzero(tie):
                    ahead[i] = tuple(ys[i].tolist()) < tuple(p.tolist())
            hit |= ahead
        return hit
    edges = _protected_edges(pair)
    if not edges:
        return hit
    e = np.array(edges)
    centres, radii = lens_centres(pts[e[:, 0]], pts[e[:, 1]], pair.model.beta)
    for lo in range(0, len(e), 64):
        hit |= lens_blocked(centres[lo:lo + 64], radii[lo:lo + 64], ys).any(axis=0)
    return hit


def _check_new(pair: ConfigPair, y) -> np.ndarray:
    y = np.asarray(y, dtype=float).reshape(pair.psi.dim)
    if pair.psi.index_of(y) is not None:
        raise ValueError("y already belongs to psi")
    return y


def in_influence_zone(pair: ConfigPair, y) -> bool:
    y = _check_new(pair, y)
    return bool(zone_membership(pair, y[None, :])[0])


def in_influence_zone_recompute(pair: ConfigPair, y) -> bool:
    """Zone predicate by rebuilding the whole graph with ``y`` inserted."""
    y = _check_new(pair, y)
    indptr, indices = pair.csr
    pts = pair.psi.points
    ip2, ix2 = out_arrays(np.vstack([pts, y]), pair.model, method="brute")
    for x in protected_nodes(pair):
        before = set(indices[indptr[x]:indptr[x + 1]].tolist())
        after = set(ix2[ip2[x]:ip2[x + 1]].tolist())
        if not before <= after:
            return True
    return False


def _disk_box(centres: np.ndarray, radii: np.ndarray, d: int) -> Box:
    if len(radii) == 0:
        return Box(np.zeros(d), np.zeros(d))
    return Box((centres - radii[:, None]).min(axis=0), (centres + radii[:, None]).max(axis=0))


def influence_bounding(pair: ConfigPair) -> Box:
    """Box containing the zone: bounding box of its disks, inflated by 1%."""
    centres, radii = zone_disks(pair)
    return _disk_box(centres, radii, pair.psi.dim).inflate(rel=0.01)


def influence_volume(pair: ConfigPair, method: str = "auto", rel_tol: float = 1e-3, samples: int = 100_000,
                     seed: Optional[Seed] = None, max_depth: int = 12) -> InfluenceEstimate:
    """Volume of the influence zone.

    ``exact`` sums boundary arcs of the disk union (planar only);
    ``quadrature`` integrates the disk union with its SDF, one overlap group
    at a time (planar only);
    ``mc`` samples the membership predicate over the bounding box and needs a
    seed; ``nng_balls`` integrates the reduced objective, the union of the
    nearest-neighbour balls of the marked nodes (exact in the plane);
    ``auto`` is ``exact`` in the plane and Monte Carlo otherwise.
    """
    d = pair.psi.dim
    prot = protected_nodes(pair)
    if method == "auto":
        method = "exact" if d == 2 else "mc"
    if method == "nng_balls":
        centres, radii = nng_reduced_disks(pair)
        box = _disk_box(centres, radii, d).inflate(rel=0.01)
        if d == 2:
            vol = VolumeEstimate(disk_union_area(centres, radii), 0.0, "closed_form", 0)
        else:
            if seed is None:
                raise ValueError("Monte Carlo volumes need a seed")
            vol = region_volume_mc(disk_union_region(centres, radii, box), samples, seed)
        return InfluenceEstimate(vol, box, prot)
    box = influence_bounding(pair)
    if method == "exact":
        if d != 2:
            raise ValueError("exact disk-union areas are only available in two dimensions")
        vol = VolumeEstimate(disk_union_area(*zone_disks(pair)), 0.0, "closed_form", 0)
    elif method == "quadrature":
        if d != 2:
            raise ValueError("quadrature is only supported in two dimensions")
        vol = disk_union_quadrature(*zone_disks(pair), rel_tol, max_depth)
    elif method == "mc":
        if seed is None:
            raise ValueError("Monte Carlo volumes need a seed")
        vol = region_volume_mc(Region(lambda ys: zone_membership(pair, ys), box), samples, seed)
    else:
        raise ValueError(f"unknown volume method {method!r}")
    return InfluenceEstimate(vol, box, prot)
