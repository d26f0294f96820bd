"""Simulated annealing for the smallest influence-zone volume over admissible pairs.

The score constraint is removed by scale invariance: after every move the pair
is rescaled by ``t = (sum of marked scores) ** (-1 / alpha)`` so that the
marked nodes carry total score exactly one. The search then runs over point
sets ``psi`` with a marked mask ``phi``.

In the plane every zone is a finite union of disks, so objectives are exact
disk-union areas and the search is deterministic given its seed. In other
dimensions volumes are Monte Carlo estimates that reuse one sample stream per
restart (common random numbers), and the best few candidates are re-measured
at high precision at the end.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .conditions import jitter_certificate, model_constants
from .geometry import (ball_union_volume, ball_volume, disk_union_area, disk_union_quadrature,
                       unit_ball_samples)
from .graphs import GraphModel, out_arrays
from .influence import ConfigPair, influence_volume, nng_reduced_disks, zone_disks, phi_score_sum
from .parallel import map_tasks
from .point_process import PointConfig, Seed
from .scores import ScoreVariant, _scores_from_csr

__all__ = [
    "Candidate",
    "AnnealParams",
    "OptResult",
    "normalize_pair",
    "admissible",
    "objective_volume",
    "optimize_rate",
    "rate_function",
    "positivity_floor",
]

OBJECTIVES = ("literal", "nng_reduced")
MOVES = ("jitter", "add_satellite", "remove_point", "toggle_phi")
TIE_REL = 1e-12  # restarts within this relative gap count as equal
_RESOLVE = 64 * np.finfo(float).eps  # relative coordinate error tolerated against the jitter scale


@dataclass
class Candidate:
    pair: ConfigPair
    normalized_volume: float
    score_sum: float

    def to_dict(self) -> dict:
        return {"points": self.pair.psi.points.tolist(), "phi": self.pair.phi.tolist(),
                "volume": self.normalized_volume, "score_sum": self.score_sum}


@dataclass
class AnnealParams:
    restarts: int = 32
    steps_per_restart: int = 20_000
    initial_temp: float = 0.5
    cooling: Optional[float] = None  # geometric factor per step; default reaches 1e-4 at the end
    move_mix: Sequence[float] = (0.55, 0.2, 0.15, 0.1)
    jitter_scale: float = 1e-6  # admissibility: edges must survive moves of this size
    m_max: int = 8
    seed: Seed = field(default_factory=lambda: Seed(0))
    phi_sizes: Sequence[Optional[int]] = (None, 1, 2)
    mc_samples: int = 20_000

    def __post_init__(self):
        mix = np.asarray(self.move_mix, dtype=float)
        if mix.shape != (4,) or np.any(mix < 0) or abs(mix.sum() - 1) > 1e-12:
            raise ValueError("move_mix must be four nonnegative probabilities summing to 1")
        if self.restarts < 1 or self.steps_per_restart < 1:
            raise ValueError("restarts and steps must be positive")
        if not self.initial_temp > 0:
            raise ValueError("initial temperature must be positive")
        if self.cooling is not None and not 0 < self.cooling <= 1:
            raise ValueError("cooling factor must lie in (0, 1]")

    def cooling_factor(self) -> float:
        if self.cooling is not None:
            return self.cooling
        return (1e-4 / self.initial_temp) ** (1.0 / self.steps_per_restart)

    def to_dict(self) -> dict:
        return {"restarts": self.restarts, "steps_per_restart": self.steps_per_restart,
                "initial_temp": self.initial_temp, "cooling": self.cooling_factor(),
                "move_mix": dict(zip(MOVES, map(float, self.move_mix))), "jitter_scale": self.jitter_scale,
                "m_max": self.m_max, "phi_sizes": list(self.phi_sizes), "mc_samples": self.mc_samples}


@dataclass
class OptResult:
    best: Candidate
    trace: list
    objective: str
    params: AnnealParams
    min_evaluated_volume: float
    floor: float
    evaluations: int
    restart_best: list
    check: dict = field(default_factory=dict)

    @property
    def best_volume(self) -> float:
        return self.best.normalized_volume

    def to_dict(self, max_trace: int = 512) -> dict:
        step = max(1, len(self.trace) // max_trace)
        trace = self.trace[::step]
        if self.trace and trace[-1] != self.trace[-1]:
            trace.append(self.trace[-1])
        return {
            "objective": self.objective,
            "best_volume": self.best_volume,
            "best_points": self.best.pair.psi.points.tolist(),
            "phi_mask": [i in set(self.best.pair.phi.tolist()) for i in range(len(self.best.pair.psi))],
            "trace_downsampled": [[int(s), float(v)] for s, v in trace],
            "params": self.params.to_dict(),
            "seed": self.params.seed.to_dict(),
            "model": self.best.pair.model.to_dict(),
            "variant": self.best.pair.variant.to_dict(),
            "min_evaluated_volume": self.min_evaluated_volume,
            "positivity_floor": self.floor,
            "evaluations": self.evaluations,
            "restart_best": self.restart_best,
            "check": self.check,
        }

    def to_json(self, path, extra: Optional[dict] = None) -> None:
        out = self.to_dict()
        if extra:
            out.update(extra)
        Path(path).write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")


def rate_function(inf_A: float, r: float, d: int, alpha: float) -> float:
    """``inf_A * r ** (d / alpha)``."""
    if inf_A < 0:
        raise ValueError("inf_A must be nonnegative")
    if not r > 0:
        raise ValueError("r must be positive")
    return inf_A * r ** (d / alpha)


def positivity_floor(model: GraphModel) -> float:
    """Lower bound ``kappa_d / (2^d (c_max + 1)^2)`` on every zone volume."""
    c_max = model_constants(model)["c_max"]
    return ball_volume(model.dim) / (2 ** model.dim * (c_max + 1) ** 2)


def normalize_pair(pair: ConfigPair) -> ConfigPair:
    """Rescale so the marked nodes carry total score one."""
    s = phi_score_sum(pair)
    if not s > 0:
        raise ValueError("marked nodes have no out-edges; cannot normalise")
    if s == 1.0:
        return pair
    t = s ** (-1.0 / pair.variant.alpha)
    return pair.scaled(t)


def admissible(pair: ConfigPair, jitter_scale: float = 1e-6) -> bool:
    """Cardinality, score constraint, and robustness of all edges at ``jitter_scale``."""
    if len(pair.psi) < pair.model.c_inf or len(pair.phi) == 0:
        return False
    if phi_score_sum(pair) < 1 - 1e-12:
        return False
    pts = pair.psi.points
    if not np.abs(pts - pts[pair.phi[0]]).max() * _RESOLVE < jitter_scale:
        return False
    return jitter_certificate(pair.psi.points, pair.model, jitter_scale)


def _mc_unit_samples(seed: Seed, d: int, samples: int) -> np.ndarray:
    return unit_ball_samples(seed.rng(), samples, d)


def objective_volume(pair: ConfigPair, objective: str, unit_samples: Optional[np.ndarray] = None) -> float:
    """Zone volume for the annealer: exact in the plane, common-random-number MC otherwise."""
    if objective == "nng_reduced":
        centres, radii = nng_reduced_disks(pair)
    else:
        if pair.psi.dim != 2 and pair.model.kind != "knn":
            raise NotImplementedError("beta-skeletons are planar")
        centres, radii = zone_disks(pair)
    if pair.psi.dim == 2:
        return disk_union_area(centres, radii)
    return ball_union_volume(centres, radii, unit_samples).value


def _admissible_fast(pts, phi_mask, model, variant, jitter_scale):
    """Normalise raw arrays and test admissibility; returns a pair or ``None``."""
    if len(pts) < model.c_inf or not phi_mask.any():
        return None
    indptr, indices = out_arrays(pts, model, method="brute")
    with np.errstate(over="ignore"):
        s = float(_scores_from_csr(pts, indptr, indices, variant)[phi_mask].sum())
    if not s > 0 or not math.isfinite(s):
        return None
    t = s ** (-1.0 / variant.alpha)
    phi = np.flatnonzero(phi_mask)
    # coordinates must resolve the jitter scale, or the certificate below means nothing
    if not np.abs((pts - pts[phi[0]]) * t).max() * _RESOLVE < jitter_scale:
        return None
    try:
        norm = ConfigPair(phi, (pts - pts[phi[0]]) * t, model, variant)
    except ValueError:
        return None
    with np.errstate(over="ignore"):  # nodes outside phi may carry huge edges
        off = abs(phi_score_sum(norm) - 1.0)
    if off > 1e-9:
        return None
    if not jitter_certificate(norm.psi.points, model, jitter_scale):
        return None
    return norm


def _constraint_ok(pair: ConfigPair, constraint) -> bool:
    if constraint is None:
        return True
    m0, delta = constraint
    indptr, indices = pair.csr
    scores = _scores_from_csr(pair.psi.points, indptr, indices, pair.variant)[pair.phi]
    top = np.sort(scores)[::-1][:m0].sum()
    return top < 1 - delta


def _propose(rng, pts, phi_mask, params: AnnealParams, model: GraphModel, forced: Optional[int]):
    pts = pts.copy()
    phi_mask = phi_mask.copy()
    m, d = pts.shape
    move = rng.choice(4, p=np.asarray(params.move_mix, dtype=float))
    if move == 0:
        i = rng.integers(m)
        scale = 10.0 ** rng.uniform(-4, 0)
        pts[i] += scale * rng.standard_normal(d)
    elif move == 1:
        if m >= params.m_max:
            return None
        i = rng.integers(m)
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        pts = np.vstack([pts, pts[i] + 10.0 ** rng.uniform(-3, -0.5) * u])
        phi_mask = np.append(phi_mask, False)
    elif move == 2:
        free = np.flatnonzero(~phi_mask)
        if m <= model.c_inf or len(free) == 0:
            return None
        i = free[rng.integers(len(free))]
        pts = np.delete(pts, i, axis=0)
        phi_mask = np.delete(phi_mask, i)
    else:
        if forced is None:
            i = rng.integers(m)
            phi_mask[i] = ~phi_mask[i]
        else:
            on, off = np.flatnonzero(phi_mask), np.flatnonzero(~phi_mask)
            if len(off) == 0:
                return None
            phi_mask[on[rng.integers(len(on))]] = False
            phi_mask[off[rng.integers(len(off))]] = True
    return pts, phi_mask


def _initial(rng, params: AnnealParams, model, variant, forced, constraint):
    for _ in range(1000):
        lo = max(model.c_inf, forced or 1, 2)
        m = int(rng.integers(lo, max(lo, min(params.m_max, 5)) + 1))
        pts = rng.uniform(-1, 1, size=(m, model.dim))
        size = forced if forced is not None else int(rng.integers(1, m + 1))
        phi_mask = np.zeros(m, dtype=bool)
        phi_mask[rng.choice(m, size=size, replace=False)] = True
        pair = _admissible_fast(pts, phi_mask, model, variant, params.jitter_scale)
        if pair is not None and _constraint_ok(pair, constraint):
            return pair
    raise RuntimeError("no admissible starting configuration after 1000 attempts")


def _anneal_restart(args):
    model, variant, objective, params, restart, constraint = args
    rng = params.seed.rng(restart)
    sizes = list(params.phi_sizes)
    if constraint is not None:
        # with at most m0 marked nodes the top-m0 share is the whole unit score
        sizes = [k for k in sizes if k is None or k > constraint[0]]
    forced = sizes[restart % len(sizes)] if sizes else None
    unit = None
    if model.dim != 2:
        unit = _mc_unit_samples(params.seed.child(f"crn{restart}"), model.dim, params.mc_samples)
    cur = _initial(rng, params, model, variant, forced, constraint)
    cur_v = objective_volume(cur, objective, unit)
    best, best_v = cur, cur_v
    min_seen = cur_v
    evals = 1
    trace = [(0, best_v)]
    temp = params.initial_temp
    cool = params.cooling_factor()
    for step in range(1, params.steps_per_restart + 1):
        temp *= cool
        prop = _propose(rng, cur.psi.points, np.isin(np.arange(len(cur.psi)), cur.phi), params, model, forced)
        # always draw the acceptance uniform so the stream position is move independent
        u = rng.random()
        if prop is None:
            continue
        cand = _admissible_fast(prop[0], prop[1], model, variant, params.jitter_scale)
        if cand is None or not _constraint_ok(cand, constraint):
            continue
        v = objective_volume(cand, objective, unit)
        evals += 1
        min_seen = min(min_seen, v)
        if v <= cur_v or u < math.exp(-(v - cur_v) / temp):
            cur, cur_v = cand, v
            if v < best_v:
                best, best_v = cand, v
                trace.append((step, best_v))
    best, best_v = _prune(best, best_v, objective, unit, params, constraint)
    return best, best_v, min_seen, evals, trace


def _prune(pair, vol, objective, unit, params, constraint):
    """Greedily drop unmarked points whose removal does not enlarge the zone."""
    improved = True
    while improved:
        improved = False
        for i in np.flatnonzero(~np.isin(np.arange(len(pair.psi)), pair.phi)):
            pts = np.delete(pair.psi.points, i, axis=0)
            mask = np.delete(np.isin(np.arange(len(pair.psi)), pair.phi), i)
            cand = _admissible_fast(pts, mask, pair.model, pair.variant, params.jitter_scale)
            if cand is None or not _constraint_ok(cand, constraint):
                continue
            v = objective_volume(cand, objective, unit)
            if v <= vol * (1 + 1e-12):
                pair, vol = cand, v
                improved = True
                break
    return pair, vol


def optimize_rate(model: GraphModel, variant: ScoreVariant, objective: str = "literal",
                  params: Optional[AnnealParams] = None, workers: int = 1,
                  constraint: Optional[tuple] = None) -> OptResult:
    """Anneal over admissible pairs and return the smallest zone volume found.

    ``constraint = (m0, delta)`` restricts the search to pairs whose ``m0``
    largest marked scores sum to less than ``1 - delta``. Restart ``i`` uses
    replica stream ``i`` of ``params.seed``; restarts are merged in index
    order, so the result does not depend on ``workers``.
    """
    if params is None:
        params = AnnealParams()
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}")
    if objective == "nng_reduced" and not model.is_nng:
        raise NotImplementedError("the reduced objective is defined for the nearest-neighbour graph only")
    if not variant.alpha > model.dim:
        raise ValueError("alpha must exceed the dimension")
    if params.m_max < model.c_inf:
        raise ValueError("m_max must be at least c_INF")
    tasks = [(model, variant, objective, params, i, constraint) for i in range(params.restarts)]
    runs = map_tasks(_anneal_restart, tasks, workers)
    trace = []
    best_v = math.inf
    min_seen = math.inf
    evals = 0
    restart_best = []
    for i, (pair, v, mseen, ev, tr) in enumerate(runs):
        offset = i * (params.steps_per_restart + 1)
        for s, tv in tr:
            if tv < best_v:
                best_v = tv
                trace.append((offset + s, tv))
        if v < best_v:
            trace.append((offset + params.steps_per_restart, v))
        restart_best.append(v)
        best_v = min(best_v, v)
        min_seen = min(min_seen, mseen)
        evals += ev
    # restarts equal up to rounding: prefer the fewest points, since points that
    # add no measurable area (a far pair at distance 1e-9, say) are not part of the optimum
    cutoff = min(restart_best) * (1 + TIE_REL)
    ties = [i for i, v in enumerate(restart_best) if v <= cutoff]
    j = min(ties, key=lambda i: (len(runs[i][0].psi), restart_best[i], i))
    pair, v = runs[j][0], restart_best[j]
    check = {}
    if model.dim != 2:
        # final high-precision re-measurement of the five best restarts
        order = np.argsort(restart_best, kind="stable")[:5]
        remeasured = []
        for j in order:
            p = runs[j][0]
            centres, radii = nng_reduced_disks(p) if objective == "nng_reduced" else zone_disks(p)
            unit = _mc_unit_samples(params.seed.child(f"final{j}"), model.dim, 1_000_000)
            est = ball_union_volume(centres, radii, unit)
            remeasured.append((est.value, est.std_error, int(j)))
        val, se, j = min(remeasured)
        pair, v = runs[j][0], val
        check["remeasured"] = [list(r) for r in remeasured]
        check["std_error"] = se
    else:
        if objective == "literal":
            q = influence_volume(pair, "quadrature", rel_tol=1e-5).volume
        else:
            q = disk_union_quadrature(*nng_reduced_disks(pair), rel_tol=1e-5)
        check = {"quadrature_value": q.value, "quadrature_bracket": q.bracket}
    cand = Candidate(pair, float(v), phi_score_sum(pair))
    return OptResult(cand, trace, objective, params, float(min_seen), positivity_floor(model), evals,
                     [float(x) for x in restart_best], check)
