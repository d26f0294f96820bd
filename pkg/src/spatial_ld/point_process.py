"""Seeded Poisson and binomial point processes in boxes.

Randomness is counter based: a :class:`Seed` ``(root, stream)`` becomes the
128-bit key of a Philox generator, and replica ``i`` starts at counter word
``i``. Replicas therefore never depend on the order (or the process) in which
they are drawn.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .geometry import Box

__all__ = ["Seed", "PointConfig", "sample_poisson", "sample_binomial", "poisson_points",
           "read_points_csv", "write_points_csv"]

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class Seed:
    root: int
    stream: int = 0

    def __post_init__(self):
        object.__setattr__(self, "root", int(self.root) & _MASK64)
        object.__setattr__(self, "stream", int(self.stream) & _MASK64)

    def rng(self, replica: int = 0) -> np.random.Generator:
        """Generator for one replica; distinct replicas get disjoint counter ranges."""
        if replica < 0:
            raise ValueError("replica index must be nonnegative")
        bitgen = np.random.Philox(key=[self.root, self.stream], counter=[0, 0, int(replica) & _MASK64, 0])
        return np.random.Generator(bitgen)

    def child(self, tag) -> "Seed":
        """An independent stream derived from this one and a tag."""
        h = hashlib.blake2b(f"{self.root}:{self.stream}:{tag}".encode(), digest_size=8).digest()
        return Seed(self.root, int.from_bytes(h, "little"))

    def to_dict(self) -> dict:
        return {"root": self.root, "stream": self.stream}


class PointConfig:
    """A finite simple point configuration in ``R^d``.

    Construction rejects duplicate points (the configurations of the model are
    simple) and non-finite coordinates. The coordinate array is read-only.
    """

    def __init__(self, points, labels: Optional[Sequence[int]] = None, dim: Optional[int] = None):
        pts = np.asarray(points, dtype=float)
        if pts.size == 0:
            if dim is None:
                dim = pts.shape[1] if pts.ndim == 2 else 1
            pts = np.zeros((0, dim))
        elif pts.ndim == 1:
            pts = pts[:, None] if dim == 1 else pts[None, :]
        if pts.ndim != 2:
            raise ValueError("points must be an (m, d) array")
        if dim is not None and pts.shape[1] != dim:
            raise ValueError(f"expected dimension {dim}, got {pts.shape[1]}")
        if pts.shape[1] < 1:
            raise ValueError("dimension must be >= 1")
        if not np.all(np.isfinite(pts)):
            raise ValueError("coordinates must be finite")
        if len(pts) > 1 and len(np.unique(pts, axis=0)) != len(pts):
            raise ValueError("duplicate points in configuration")
        pts = np.array(pts, copy=True)
        pts.setflags(write=False)
        self.points = pts
        if labels is not None:
            labels = np.asarray(labels, dtype=int)
            if labels.shape != (len(pts),):
                raise ValueError("one label per point required")
        self.labels = labels

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def __getitem__(self, i) -> np.ndarray:
        return self.points[i]

    def __eq__(self, other) -> bool:
        return isinstance(other, PointConfig) and np.array_equal(self.points, other.points)

    def __repr__(self) -> str:
        return f"PointConfig(n={len(self)}, dim={self.dim})"

    def scaled(self, tau: float) -> "PointConfig":
        return PointConfig(self.points * tau, self.labels, dim=self.dim)

    def translated(self, shift) -> "PointConfig":
        return PointConfig(self.points + np.asarray(shift, dtype=float), self.labels, dim=self.dim)

    def with_point(self, y) -> "PointConfig":
        y = np.asarray(y, dtype=float).reshape(1, self.dim)
        return PointConfig(np.vstack([self.points, y]), dim=self.dim)

    def index_of(self, y) -> Optional[int]:
        y = np.asarray(y, dtype=float).reshape(self.dim)
        hit = np.flatnonzero(np.all(self.points == y, axis=1))
        return int(hit[0]) if len(hit) else None

    def to_csv(self, path) -> None:
        write_points_csv(self, path)

    @classmethod
    def from_csv(cls, path) -> "PointConfig":
        return read_points_csv(path)


def write_points_csv(config: PointConfig, path) -> None:
    """``dim=<d>`` header, then one point per line at 17 significant digits."""
    lines = [f"dim={config.dim}"]
    lines += [",".join(f"{v:.17g}" for v in row) for row in config.points]
    Path(path).write_text("\n".join(lines) + "\n")


def read_points_csv(path) -> PointConfig:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("dim="):
        raise ValueError(f"{path}: missing 'dim=<d>' header")
    dim = int(text[0][4:])
    rows = [[float(v) for v in line.split(",")] for line in text[1:] if line.strip()]
    if any(len(r) != dim for r in rows):
        raise ValueError(f"{path}: row length does not match dim={dim}")
    return PointConfig(np.array(rows, dtype=float).reshape(-1, dim), dim=dim)


def poisson_points(box: Box, intensity: float, rng: np.random.Generator) -> np.ndarray:
    """Raw ``(m, d)`` array of a Poisson sample; the hot path of the simulators."""
    count = rng.poisson(intensity * box.volume)
    return box.lower + box.widths * rng.random((count, box.dim))


def sample_poisson(box: Box, intensity: float, seed: Seed, replica: int = 0) -> PointConfig:
    """Homogeneous Poisson process of the given intensity on ``box``."""
    if not intensity > 0:
        raise ValueError("intensity must be positive")
    if box.volume <= 0:
        raise ValueError("box must be nondegenerate")
    return PointConfig(poisson_points(box, intensity, seed.rng(replica)), dim=box.dim)


def sample_binomial(box: Box, m: int, seed: Seed, replica: int = 0) -> PointConfig:
    """Exactly ``m`` i.i.d. uniform points in ``box``."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    rng = seed.rng(replica)
    return PointConfig(box.lower + box.widths * rng.random((m, box.dim)), dim=box.dim)
