"""Out-neighbour maps for k-nearest-neighbour graphs and planar beta-skeletons.

Every construction has two routes. ``method="brute"`` is the O(n^2) (kNN) or
O(n^3) (beta-skeleton) oracle. ``method="indexed"`` is the fast path: a
``cKDTree`` for kNN candidates and Delaunay candidate edges with ball queries
for beta-skeletons. Both routes make their final decisions with the same
floating-point expressions, so they agree bit for bit on the same input.

kNN ties at the cut-off distance go to the lexicographically smallest
coordinate tuple. A beta-skeleton edge is blocked only by a node strictly
inside the lens; nodes on its boundary do not block.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.spatial import Delaunay, QhullError, cKDTree

from .geometry import exact_distances, lens_blocked as _lens_blocked, lens_centres as _lens_centres
from .point_process import PointConfig

__all__ = [
    "GraphModel",
    "DirectedAdjacency",
    "build_adjacency",
    "out_arrays",
    "knn_distance",
    "out_neighbors",
    "in_out_neighbors",
    "write_edges_csv",
]

_BRUTE_BELOW = 32
_TIE_REL = 1e-9


@dataclass(frozen=True)
class GraphModel:
    kind: str
    dim: int
    k: int = 1
    beta: float = 1.0

    def __post_init__(self):
        if self.kind not in ("knn", "beta_skeleton"):
            raise ValueError(f"unknown graph kind {self.kind!r}")
        if self.kind == "knn" and self.k < 1:
            raise ValueError("knn requires k >= 1")
        if self.kind == "beta_skeleton":
            if self.dim != 2:
                raise ValueError("beta-skeletons are only supported in the plane")
            if self.beta < 1:
                raise ValueError("beta-skeletons require beta >= 1")
        if self.dim < 1:
            raise ValueError("dimension must be >= 1")

    @classmethod
    def knn(cls, k: int = 1, dim: int = 2) -> "GraphModel":
        return cls("knn", dim, k=k)

    @classmethod
    def beta_skeleton(cls, beta: float) -> "GraphModel":
        return cls("beta_skeleton", 2, beta=beta)

    @property
    def c_inf(self) -> int:
        """Smallest admissible configuration size (k+1 for kNN, 1 for beta-skeletons)."""
        return self.k + 1 if self.kind == "knn" else 1

    @property
    def is_nng(self) -> bool:
        return self.kind == "knn" and self.k == 1

    def to_dict(self) -> dict:
        if self.kind == "knn":
            return {"kind": "knn", "k": self.k, "dim": self.dim}
        return {"kind": "beta_skeleton", "beta": self.beta, "dim": self.dim}


@dataclass(frozen=True)
class DirectedAdjacency:
    """Out-neighbour lists in CSR layout; each list is sorted by node index."""

    config: PointConfig
    indptr: np.ndarray
    indices: np.ndarray

    def __len__(self) -> int:
        return len(self.indptr) - 1

    def out(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def arcs(self):
        src = np.repeat(np.arange(len(self)), np.diff(self.indptr))
        return src, self.indices

    def arc_lengths(self) -> np.ndarray:
        src, dst = self.arcs()
        pts = self.config.points
        return exact_distances(pts[dst], pts[src]) if len(src) else np.zeros(0)

    def edge_set(self) -> set:
        src, dst = self.arcs()
        return set(zip(src.tolist(), dst.tolist()))

    def same_as(self, other: "DirectedAdjacency") -> bool:
        return np.array_equal(self.indptr, other.indptr) and np.array_equal(self.indices, other.indices)


def _lex_order(points: np.ndarray, dist: np.ndarray) -> np.ndarray:
    keys = [points[:, j] for j in range(points.shape[1] - 1, -1, -1)] + [dist]
    return np.lexsort(keys)


def _knn_select(points: np.ndarray, i: int, cand: np.ndarray, k: int) -> np.ndarray:
    cand = cand[cand != i]
    dist = exact_distances(points[cand], points[i])
    order = _lex_order(points[cand], dist)
    return np.sort(cand[order[:k]])


def _knn_brute(points: np.ndarray, k: int):
    n = len(points)
    every = np.arange(n)
    rows = [_knn_select(points, i, every, k) for i in range(n)]
    return _to_csr(rows)


def _knn_indexed(points: np.ndarray, k: int):
    n = len(points)
    if n - 1 <= k or n < _BRUTE_BELOW:
        return _knn_brute(points, k)
    tree = cKDTree(points)
    kk = min(k + 2, n)
    _, idx = tree.query(points, k=kk)
    if not np.array_equal(idx[:, 0], np.arange(n)):
        return _knn_brute(points, k)
    nb = idx[:, 1:]
    d = exact_distances(points[nb], points[:, None, :])
    dk = d[:, :k].max(axis=1)
    if nb.shape[1] > k:
        clear = d[:, k] > dk * (1 + _TIE_REL)
    else:
        clear = np.ones(n, dtype=bool)
    out = np.sort(nb[:, :k], axis=1)
    for i in np.flatnonzero(~clear):
        cand = np.asarray(tree.query_ball_point(points[i], dk[i] * (1 + 1e-8)), dtype=int)
        out[i] = _knn_select(points, i, cand, k)
    indptr = np.arange(0, n * k + 1, k)
    return indptr, out.reshape(-1)


def _to_csr(rows):
    lengths = np.array([len(r) for r in rows], dtype=int)
    indptr = np.concatenate([[0], np.cumsum(lengths)])
    indices = np.concatenate(rows).astype(int) if len(rows) else np.zeros(0, dtype=int)
    return indptr, indices


def _pairs_to_csr(n: int, pairs) -> tuple:
    rows = [[] for _ in range(n)]
    for i, j in pairs:
        rows[i].append(j)
        rows[j].append(i)
    return _to_csr([np.sort(np.asarray(r, dtype=int)) for r in rows])


def _beta_brute(points: np.ndarray, beta: float):
    n = len(points)
    pairs = []
    for i in range(n - 1):
        js = np.arange(i + 1, n)
        centres, radii = _lens_centres(points[i], points[js], beta)
        hit = _lens_blocked(centres, radii, points)
        hit[:, i] = False
        hit[np.arange(len(js)), js] = False
        pairs.extend((i, int(j)) for j in js[~hit.any(axis=1)])
    return _pairs_to_csr(n, pairs)


def _beta_indexed(points: np.ndarray, beta: float):
    n = len(points)
    if n < _BRUTE_BELOW:
        return _beta_brute(points, beta)
    try:
        tri = Delaunay(points)
    except QhullError:
        return _beta_brute(points, beta)
    simplices = tri.simplices
    cand = np.concatenate([simplices[:, [0, 1]], simplices[:, [1, 2]], simplices[:, [0, 2]]])
    cand = np.unique(np.sort(cand, axis=1), axis=0)
    centres, radii = _lens_centres(points[cand[:, 0]], points[cand[:, 1]], beta)
    tree = cKDTree(points)
    near = [tree.query_ball_point(centres[:, s], radii * (1 + 1e-9)) for s in range(2)]
    pairs = []
    for e, (i, j) in enumerate(cand):
        others = set(near[0][e]) | set(near[1][e])
        others.discard(i)
        others.discard(j)
        if others:
            w = points[np.fromiter(others, dtype=int)]
            if _lens_blocked(centres[e:e + 1], radii[e:e + 1], w).any():
                continue
        pairs.append((int(i), int(j)))
    return _pairs_to_csr(n, pairs)


def out_arrays(points: np.ndarray, model: GraphModel, method: str = "indexed"):
    """CSR ``(indptr, indices)`` for a raw point array; the simulators' entry point."""
    points = np.asarray(points, dtype=float)
    if method not in ("indexed", "brute", "auto"):
        raise ValueError(f"unknown method {method!r}")
    if len(points) == 0:
        return np.zeros(1, dtype=int), np.zeros(0, dtype=int)
    brute = method == "brute"
    if model.kind == "knn":
        return _knn_brute(points, model.k) if brute else _knn_indexed(points, model.k)
    if points.shape[1] != 2:
        raise ValueError("beta-skeletons need planar points")
    return _beta_brute(points, model.beta) if brute else _beta_indexed(points, model.beta)


def build_adjacency(config: PointConfig, model: GraphModel, method: str = "auto") -> DirectedAdjacency:
    """Directed out-neighbour lists of ``config`` under ``model``.

    Beta-skeleton edges are stored as two opposite arcs.
    """
    if not isinstance(config, PointConfig):
        config = PointConfig(config)
    if config.dim != model.dim:
        raise ValueError(f"model is {model.dim}-dimensional but points are {config.dim}-dimensional")
    indptr, indices = out_arrays(config.points, model, method)
    return DirectedAdjacency(config, indptr, indices)


def _check_node(config_len: int, x: int) -> int:
    if not 0 <= int(x) < config_len:
        raise IndexError(f"node {x} not in configuration of size {config_len}")
    return int(x)


def knn_distance(config: PointConfig, x: int, j: int) -> float:
    """Distance from node ``x`` to its ``j``-th closest other node (ties counted with multiplicity)."""
    n = len(config)
    x = _check_node(n, x)
    if not 1 <= j <= n - 1:
        raise ValueError(f"rank j={j} outside 1..{n - 1}")
    d = exact_distances(np.delete(config.points, x, axis=0), config.points[x])
    return float(np.partition(d, j - 1)[j - 1])


def out_neighbors(adj: DirectedAdjacency, x: int) -> set:
    x = _check_node(len(adj), x)
    return set(adj.out(x).tolist())


def in_out_neighbors(adj: DirectedAdjacency, x: int) -> set:
    x = _check_node(len(adj), x)
    src, dst = adj.arcs()
    return set(adj.out(x).tolist()) | set(src[dst == x].tolist())


def write_edges_csv(adj: DirectedAdjacency, path, header: Optional[bool] = False) -> None:
    """One directed arc per line: ``src_index,dst_index,length``."""
    src, dst = adj.arcs()
    lengths = adj.arc_lengths()
    lines = ["src_index,dst_index,length"] if header else []
    lines += [f"{s},{t},{l:.17g}" for s, t, l in zip(src, dst, lengths)]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))
