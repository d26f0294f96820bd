"""Monte Carlo upper tails of the windowed functional and condensation diagnostics.

A replica samples a unit-intensity Poisson process on the cube of side
``n + 2 * margin``, builds the graph there, and keeps two summaries of the
window ``[-n/2, n/2]^d``: the functional ``H_n`` and the eight largest window
scores. Because every replica has its own counter-based stream, any replica
can be regenerated exactly later; full score tables of hits are rebuilt on
demand rather than stored.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.stats import beta as beta_dist

from .geometry import cube
from .graphs import GraphModel, out_arrays
from .parallel import map_replicas
from .point_process import PointConfig, Seed, poisson_points
from .scores import ScoreTable, ScoreVariant, _scores_from_csr

__all__ = [
    "TailSetup",
    "ReplicaStats",
    "TailRunRecord",
    "CondensationSummary",
    "RateCurveRow",
    "simulate_replicas",
    "replica_table",
    "windowed_mean",
    "clopper_pearson",
    "tail_record",
    "tail_probability",
    "tail_sweep",
    "tune_r",
    "condensation_stats",
    "large_score_census",
    "rate_curve",
    "write_run_json",
    "write_hits_csv",
    "write_rate_curve",
]

SCHEMA_VERSION = 1
TOP = 8
HIT_CAP = 100_000


@dataclass(frozen=True)
class TailSetup:
    model: GraphModel
    variant: ScoreVariant
    n: float
    margin: float = 4.0

    def __post_init__(self):
        if not self.n > 0:
            raise ValueError("window side n must be positive")
        if self.margin < 0:
            raise ValueError("margin must be nonnegative")

    @property
    def dim(self) -> int:
        return self.model.dim

    def to_dict(self) -> dict:
        return {"model": self.model.to_dict(), "variant": self.variant.to_dict(), "n": self.n,
                "margin": self.margin}


@dataclass
class ReplicaStats:
    H: np.ndarray
    Z: np.ndarray  # (samples, TOP), descending

    def __len__(self) -> int:
        return len(self.H)


def _replica(setup: TailSetup, seed: Seed, i: int):
    box = cube(setup.n + 2 * setup.margin, setup.dim)
    window = cube(setup.n, setup.dim)
    pts = poisson_points(box, 1.0, seed.rng(i))
    if len(pts) == 0:
        return pts, np.zeros(0, dtype=bool), np.zeros(0)
    indptr, indices = out_arrays(pts, setup.model)
    scores = _scores_from_csr(pts, indptr, indices, setup.variant)
    return pts, window.contains(pts), scores


def _sim_chunk(args):
    setup, seed, lo, hi = args
    H = np.empty(hi - lo)
    Z = np.zeros((hi - lo, TOP))
    norm = setup.n ** setup.dim
    for i in range(lo, hi):
        _, inside, scores = _replica(setup, seed, i)
        w = scores[inside]
        H[i - lo] = w.sum() / norm
        if len(w) > TOP:
            w = np.partition(w, len(w) - TOP)[-TOP:]
        top = np.sort(w)[::-1]
        Z[i - lo, :len(top)] = top
    return H, Z


def simulate_replicas(setup: TailSetup, samples: int, seed: Seed, workers: int = 1) -> ReplicaStats:
    """``H_n`` and the top window scores of replicas ``0 .. samples-1`` of ``seed``."""
    if samples < 1:
        raise ValueError("need at least one sample")
    parts = map_replicas(_sim_chunk, (setup, seed), samples, workers)
    return ReplicaStats(np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]))


def replica_table(setup: TailSetup, seed: Seed, i: int) -> ScoreTable:
    """Full window score table of replica ``i``, regenerated from its stream."""
    pts, inside, scores = _replica(setup, seed, i)
    config = PointConfig(pts, dim=setup.dim)
    idx = np.flatnonzero(inside)
    return ScoreTable(config, cube(setup.n, setup.dim), idx, scores[idx], setup.variant)


def windowed_mean(setup: TailSetup, samples: int, seed: Seed, workers: int = 1):
    """Mean and standard error of ``H_n`` at this window size and margin."""
    H = simulate_replicas(setup, samples, seed, workers).H
    return float(H.mean()), float(H.std(ddof=1) / math.sqrt(len(H)))


def clopper_pearson(hits: int, samples: int, level: float = 0.95):
    """Exact binomial interval; with no hits, the one-sided upper bound."""
    a = 1 - level
    if hits == 0:
        return 0.0, float(1 - a ** (1.0 / samples))
    lo = float(beta_dist.ppf(a / 2, hits, samples - hits + 1))
    hi = 1.0 if hits == samples else float(beta_dist.ppf(1 - a / 2, hits + 1, samples - hits))
    return lo, hi


@dataclass
class TailRunRecord:
    setup: TailSetup
    r: float
    mu_used: float
    samples: int
    hits: int
    p_hat: float
    ci95: tuple
    seed: Seed
    hit_replicas: np.ndarray = field(repr=False)
    hit_H: np.ndarray = field(repr=False)
    hit_Z: np.ndarray = field(repr=False)
    extra: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        out = {
            "schema_version": self.schema_version,
            "model": self.setup.model.to_dict(),
            "variant": self.setup.variant.tag,
            "d": self.setup.dim,
            "alpha": self.setup.variant.alpha,
            "n": self.setup.n,
            "margin": self.setup.margin,
            "r": self.r,
            "mu_used": self.mu_used,
            "samples": self.samples,
            "hits": self.hits,
            "p_hat": self.p_hat,
            "ci95": list(self.ci95),
            "seed": self.seed.to_dict(),
        }
        out.update(self.extra)
        return out


def tail_record(setup: TailSetup, stats: ReplicaStats, r: float, mu: float, seed: Seed,
                extra: Optional[dict] = None) -> TailRunRecord:
    """Count replicas with ``H_n > mu + r`` and package them."""
    hit = np.flatnonzero(stats.H > mu + r)
    n_hits = len(hit)
    keep = hit[:HIT_CAP]
    samples = len(stats)
    return TailRunRecord(setup, float(r), float(mu), samples, n_hits, n_hits / samples,
                         clopper_pearson(n_hits, samples), seed, keep, stats.H[keep], stats.Z[keep],
                         dict(extra or {}))


def tail_probability(model: GraphModel, variant: ScoreVariant, n: float, margin: float, r: float, samples: int,
                     seed: Seed, mu: Optional[float] = None, mu_samples: int = 100_000,
                     workers: int = 1) -> TailRunRecord:
    """Estimate ``P(H_n > mu + r)``.

    When ``mu`` is omitted, the windowed mean is estimated first on the
    independent stream ``seed.child("mu")``.
    """
    if not variant.alpha > model.dim:
        raise ValueError("alpha must exceed the dimension")
    setup = TailSetup(model, variant, n, margin)
    extra = {}
    if mu is None:
        mu, se = windowed_mean(setup, mu_samples, seed.child("mu"), workers)
        extra = {"mu_windowed": mu, "mu_windowed_se": se, "mu_samples": mu_samples}
    stats = simulate_replicas(setup, samples, seed, workers)
    return tail_record(setup, stats, r, mu, seed, extra)


def tail_sweep(setup: TailSetup, rs: Sequence[float], samples: int, seed: Seed, mu: float,
               workers: int = 1, stats: Optional[ReplicaStats] = None) -> list:
    """Records for several thresholds from one coupled set of replicas."""
    if stats is None:
        stats = simulate_replicas(setup, samples, seed, workers)
    return [tail_record(setup, stats, r, mu, seed) for r in rs]


def tune_r(setup: TailSetup, target_p: float, pilot_samples: int, seed: Seed, mu: float,
           workers: int = 1, stats: Optional[ReplicaStats] = None) -> float:
    """Threshold ``r`` whose pilot exceedance frequency is about ``target_p``."""
    if not 0 < target_p < 1:
        raise ValueError("target probability must lie in (0, 1)")
    if stats is None:
        stats = simulate_replicas(setup, pilot_samples, seed, workers)
    return float(np.quantile(stats.H - mu, 1 - target_p))


@dataclass
class CondensationSummary:
    m: int
    fractions: np.ndarray
    quantiles: tuple

    def to_dict(self) -> dict:
        return {"m": self.m, "hits": len(self.fractions), "quantiles": list(self.quantiles)}


def condensation_stats(record: TailRunRecord, m_list: Sequence[int], tables: Optional[Sequence] = None) -> list:
    """Per-hit ``(sum of the m largest window scores) / (r n^d)`` and its 10/50/90% quantiles.

    ``m <= 8`` uses the stored top scores; larger ``m`` needs the hits' full
    score tables (see :func:`replica_table`).
    """
    norm = record.r * record.setup.n ** record.setup.dim
    out = []
    for m in m_list:
        if m < 1:
            raise ValueError("m must be >= 1")
        if record.hits == 0:
            out.append(CondensationSummary(m, np.zeros(0), (math.nan,) * 3))
            continue
        if m <= TOP:
            sums = record.hit_Z[:, :m].sum(axis=1)
        else:
            if tables is None:
                raise ValueError(f"m = {m} needs the hits' score tables")
            sums = np.array([np.sort(t.per_node_score)[::-1][:m].sum() for t in tables])
        frac = sums / norm
        q = tuple(float(v) for v in np.quantile(frac, [0.1, 0.5, 0.9]))
        out.append(CondensationSummary(m, frac, q))
    return out


def large_score_census(table, threshold: float) -> int:
    """Number of window nodes with score at least ``threshold``."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    scores = table.per_node_score if isinstance(table, ScoreTable) else np.asarray(table, dtype=float)
    return int(np.count_nonzero(scores >= threshold))


@dataclass
class RateCurveRow:
    r: float
    empirical: float  # nan when unusable
    theoretical: float
    n: float
    hits: int

    @property
    def usable(self) -> bool:
        return self.hits >= 10


def rate_curve(records: Sequence[TailRunRecord], inf_A: float) -> list:
    """Pair ``-log p_hat / n^(d^2/alpha)`` with ``inf_A * r^(d/alpha)`` per record."""
    if not records:
        return []
    base = records[0].setup
    for rec in records:
        if (rec.setup.model, rec.setup.variant, rec.setup.n) != (base.model, base.variant, base.n):
            raise ValueError("records must share model, variant and n")
    d, alpha = base.dim, base.variant.alpha
    speed = base.n ** (d * d / alpha)
    rows = []
    for rec in sorted(records, key=lambda x: x.r):
        emp = -math.log(rec.p_hat) / speed if rec.hits >= 10 else math.nan
        theo = inf_A * rec.r ** (d / alpha) if rec.r > 0 else math.nan
        rows.append(RateCurveRow(rec.r, emp, theo, base.n, rec.hits))
    return rows


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_plain) + "\n"


def _plain(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(type(v))


def write_run_json(record: TailRunRecord, path, config: Optional[dict] = None,
                   condensation: Optional[list] = None) -> None:
    out = record.to_dict()
    if config is not None:
        out["config"] = config
    if condensation is not None:
        out["condensation"] = [c.to_dict() for c in condensation]
    Path(path).write_text(_dump(out))


def write_hits_csv(record: TailRunRecord, path) -> None:
    """``replica,H_n,Z1..Z8`` for every kept hit."""
    lines = ["replica,H_n," + ",".join(f"Z{i + 1}" for i in range(TOP))]
    for rep, h, z in zip(record.hit_replicas, record.hit_H, record.hit_Z):
        lines.append(f"{rep},{h:.17g}," + ",".join(f"{v:.17g}" for v in z))
    Path(path).write_text("\n".join(lines) + "\n")


def read_hits_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0].astype(int), data[:, 1], data[:, 2:]


def write_rate_curve(rows: Sequence[RateCurveRow], path, plot_path=None) -> None:
    """Rate-curve CSV ``r,empirical,theoretical,hits`` plus a gnuplot script."""
    lines = ["r,empirical,theoretical,hits"]
    for row in rows:
        emp = "nan" if math.isnan(row.empirical) else f"{row.empirical:.17g}"
        lines.append(f"{row.r:.17g},{emp},{row.theoretical:.17g},{row.hits}")
    Path(path).write_text("\n".join(lines) + "\n")
    if plot_path is None:
        plot_path = Path(path).with_suffix(".gp")
    name = Path(path).name
    script = [
        "set datafile separator ','",
        "set key left top",
        "set xlabel 'r'",
        "set ylabel 'normalised log tail'",
        f"plot '{name}' skip 1 using 1:2 with linespoints title 'empirical', \\",
        f"     '{name}' skip 1 using 1:3 with lines title 'theoretical'",
    ]
    Path(plot_path).write_text("\n".join(script) + "\n")
