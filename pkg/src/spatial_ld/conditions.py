"""Executable checkers for the structural conditions on the graph constructions.

All checkers rebuild adjacencies from scratch with the brute-force oracle, so
their verdicts do not depend on the indexed fast paths. They can falsify a
condition on a given input; they prove nothing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .geometry import Cone, ball_volume, cone_cover, exact_distances, lens_centres
from .graphs import GraphModel, build_adjacency, out_arrays
from .point_process import PointConfig, Seed

__all__ = [
    "StabilizationRadii",
    "ConditionReport",
    "default_c_sta",
    "model_constants",
    "affected_nodes_on_insert",
    "long_edge_count",
    "stabilization_radii",
    "in_out_set",
    "stabilization_holds",
    "continuity_probe",
    "jitter_certificate",
    "inf_condition_sides",
    "inf_condition_probe",
    "certified_c_disj",
    "c_edges",
    "beta_fin_bound",
    "tangent_configuration",
    "segment_hits_triangle",
    "recorded_edges",
    "check_condition",
]


def default_c_sta(model: GraphModel) -> int:
    return model.k + 1 if model.kind == "knn" else 2


def _outs(points: np.ndarray, model: GraphModel) -> list:
    indptr, indices = out_arrays(points, model, method="brute")
    return [frozenset(indices[indptr[i]:indptr[i + 1]].tolist()) for i in range(len(indptr) - 1)]


@dataclass
class StabilizationRadii:
    per_cone: np.ndarray
    c_sta: int

    @property
    def overall(self) -> float:
        return float(np.max(self.per_cone)) if len(self.per_cone) else 0.0


@dataclass
class ConditionReport:
    condition: str
    trials: int
    worst_observed: float
    bound_claimed: float
    violations: int
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "trials": self.trials,
            "worst_observed": self.worst_observed,
            "bound_claimed": self.bound_claimed,
            "violations": self.violations,
            "params": self.params,
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    raise TypeError(type(v))


def affected_nodes_on_insert(config: PointConfig, model: GraphModel, y) -> int:
    """Number of existing nodes whose out-neighbour set changes when ``y`` is added."""
    y = np.asarray(y, dtype=float).reshape(config.dim)
    if config.index_of(y) is not None:
        raise ValueError("inserted point already belongs to the configuration")
    before = _outs(config.points, model)
    after = _outs(np.vstack([config.points, y]), model)
    return sum(1 for i in range(len(config)) if before[i] != after[i])


def long_edge_count(config: PointConfig, model: GraphModel, M: float) -> int:
    """Nodes in the closed ball ``B_M(0)`` with an out-edge longer than ``M``."""
    if not M > 0:
        raise ValueError("M must be positive")
    pts = config.points
    if len(pts) == 0:
        return 0
    indptr, indices = out_arrays(pts, model, method="brute")
    near = exact_distances(pts, np.zeros(config.dim)) <= M
    count = 0
    for i in np.flatnonzero(near):
        out = indices[indptr[i]:indptr[i + 1]]
        if len(out) and exact_distances(pts[out], pts[i]).max() > M:
            count += 1
    return count


def stabilization_radii(config: PointConfig, x: int, cones: Sequence[Cone], c_sta: int) -> StabilizationRadii:
    """Cone radii ``c_sta * inf{r : #(cone_i + x, B_r(x)) >= c_sta}``.

    The node ``x`` sits at every cone apex and counts towards the ``c_sta``
    points, as the origin does in a rooted configuration.
    """
    if c_sta < 1:
        raise ValueError("c_sta must be >= 1")
    rel = np.delete(config.points, x, axis=0) - config.points[x]
    dist = exact_distances(rel, np.zeros(config.dim))
    radii = np.empty(len(cones))
    need = c_sta - 1
    for i, cone in enumerate(cones):
        if need == 0:
            radii[i] = 0.0
            continue
        d = np.sort(dist[cone.contains(rel)])
        radii[i] = c_sta * d[need - 1] if len(d) >= need else math.inf
    return StabilizationRadii(radii, c_sta)


def in_out_set(points: np.ndarray, model: GraphModel, x: int) -> set:
    """Coordinates (as tuples) of all in- and out-neighbours of node ``x``."""
    indptr, indices = out_arrays(points, model, method="brute")
    out = set(indices[indptr[x]:indptr[x + 1]].tolist())
    src = np.repeat(np.arange(len(points)), np.diff(indptr))
    nbrs = out | set(src[indices == x].tolist())
    return {tuple(points[j].tolist()) for j in nbrs}


def stabilization_holds(config: PointConfig, x: int, model: GraphModel, radius: float,
                        additions: Optional[np.ndarray] = None) -> bool:
    """Does deleting everything outside ``B_radius(x)`` and adding ``additions``
    (all outside that ball) leave the in/out-neighbourhood of ``x`` unchanged?"""
    if not math.isfinite(radius):
        return True
    pts = config.points
    before = in_out_set(pts, model, x)
    keep = exact_distances(pts, pts[x]) <= radius
    kept = pts[keep]
    new_x = int(np.flatnonzero(keep).tolist().index(x))
    if additions is not None and len(additions):
        additions = np.atleast_2d(additions)
        if np.any(exact_distances(additions, pts[x]) <= radius):
            raise ValueError("additions must lie outside the stabilisation ball")
        kept = np.vstack([kept, additions])
    return in_out_set(kept, model, new_x) == before


def _jitter(rng: np.random.Generator, m: int, d: int, delta: float) -> np.ndarray:
    g = rng.standard_normal((m, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * (delta * rng.random((m, 1)) ** (1.0 / d))


def continuity_probe(config: PointConfig, model: GraphModel, delta: float, trials: int, seed: Seed,
                     ladder: int = 4) -> ConditionReport:
    """Jitter every node inside ``B_delta`` and compare edge sets as index relations.

    Jitter scales ``delta, delta/10, ...`` (``ladder`` of them) are tried; the
    report counts violations at ``delta`` and records the largest scale with
    none in ``params["largest_stable_delta"]``.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    pts = config.points
    base = _outs(pts, model)
    scales = [delta * 10.0 ** -j for j in range(ladder)] if delta > 0 else [0.0]
    violations_at = []
    for s_idx, scale in enumerate(scales):
        rng = seed.rng(s_idx)
        bad = 0
        for _ in range(trials):
            moved = pts + _jitter(rng, len(pts), config.dim, scale) if scale > 0 else pts
            if _outs(moved, model) != base:
                bad += 1
        violations_at.append(bad)
    stable = [s for s, v in zip(scales, violations_at) if v == 0]
    return ConditionReport(
        "CON", trials, float(violations_at[0]), 0.0, int(violations_at[0]),
        {"delta": delta, "largest_stable_delta": max(stable) if stable else None,
         "ladder": scales, "violations_per_scale": violations_at},
    )


def jitter_certificate(points: np.ndarray, model: GraphModel, delta: float) -> bool:
    """Sufficient test that moving every node by less than ``delta`` keeps all edges.

    kNN: for each node the gap between its k-th and (k+1)-th neighbour
    distances exceeds ``4 delta``. Beta-skeleton: every third node is farther
    than ``(2 + beta) * 2 delta`` from the boundary of each lens disk.
    """
    points = np.asarray(points, dtype=float)
    n = len(points)
    if n < 2:
        return True
    if model.kind == "knn":
        k = model.k
        if n - 1 <= k:
            return True
        for i in range(n):
            d = np.sort(exact_distances(np.delete(points, i, axis=0), points[i]))
            if d[k] - d[k - 1] <= 4 * delta:
                return False
        return True
    slack = (2 + model.beta) * 2 * delta
    for i in range(n - 1):
        js = np.arange(i + 1, n)
        centres, radii = lens_centres(points[i], points[js], model.beta)
        for s in range(2):
            gap = np.abs(np.sqrt(((points[None, :, :] - centres[:, s, None, :]) ** 2).sum(axis=2)) - radii[:, None])
            gap[:, i] = np.inf
            gap[np.arange(len(js)), js] = np.inf
            if np.any(gap <= slack):
                return False
    return True


def inf_condition_sides(psi: PointConfig, theta: np.ndarray, model: GraphModel):
    """Per base node: (out set survives adding all of theta, survives every single addition)."""
    if len(psi) < model.c_inf:
        raise ValueError(f"configuration has {len(psi)} points, below c_INF = {model.c_inf}")
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    pts = psi.points
    base = _outs(pts, model)
    joint = _outs(np.vstack([pts, theta]), model)
    lhs = np.array([base[i] <= joint[i] for i in range(len(pts))])
    rhs = np.ones(len(pts), dtype=bool)
    for y in theta:
        single = _outs(np.vstack([pts, y]), model)
        rhs &= np.array([base[i] <= single[i] for i in range(len(pts))])
    return lhs, rhs


def inf_condition_probe(psi: PointConfig, theta, model: GraphModel) -> bool:
    """Whether the joint-versus-single insertion equivalence holds at every base node."""
    lhs, rhs = inf_condition_sides(psi, theta, model)
    return bool(np.all(lhs == rhs))


# -- constants -----------------------------------------------------------------

def _tau(beta: float) -> float:
    return math.acos(1.0 / beta)


def _rhombus_margin(beta: float, length_ratio: float, pos: float) -> float:
    """Distance, in units of ``a``, from ``h_m(e)`` to the rhombus boundary.

    The edge has length ``length_ratio * a`` and lies on the x-axis from 0;
    ``pos`` in ``[0, 1]`` places the point between ``a/2`` and ``|e| - a/2``.
    """
    L = length_ratio
    m = 0.5 + pos * (L - 1.0)
    h = 0.5 * L * math.sqrt(beta * beta - 1)
    verts = np.array([[0.0, 0.0], [0.5 * L, h], [L, 0.0], [0.5 * L, -h]])
    p = np.array([m, 0.0])
    best = math.inf
    for a, b in zip(verts, np.roll(verts, -1, axis=0)):
        ab = b - a
        t = np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0, 1)
        best = min(best, float(np.linalg.norm(p - (a + t * ab))))
    return best


def certified_c_disj(beta: float, grid: int = 64) -> float:
    """Numerical disjointness constant for beta-skeleton rhombi.

    Minimises the distance from the edge points ``h_m(e)`` (with ``m`` between
    ``a/2`` and ``|e| - a/2``) to the boundary of the edge's rhombus, over the
    position and the length ratio ``|e|/a >= 1``. Disks of radius ``c a`` around
    those points keep distance ``c a`` from the boundary when
    ``c = margin / 2``; the returned value is that, shrunk by ``1e-9`` so the
    inequality is strict.
    """
    if not beta > 1:
        raise ValueError("c_disj needs beta > 1")
    best = math.inf
    for L in np.concatenate([np.linspace(1, 4, grid), [8.0, 32.0]]):
        res = minimize_scalar(lambda u: _rhombus_margin(beta, L, u), bounds=(0, 1), method="bounded")
        best = min(best, res.fun, _rhombus_margin(beta, L, 0.0), _rhombus_margin(beta, L, 1.0))
    c = 0.5 * best * (1 - 1e-9)
    return min(c, 0.5 - 1e-12)


def c_edges(beta: float, c_disj: Optional[float] = None) -> float:
    """Recorded-edge bound ``1 + 2|B_{2 tan(tau) + beta/2}| / (pi c_disj^2 tan(tau)^2)``."""
    if c_disj is None:
        c_disj = certified_c_disj(beta)
    t = math.tan(_tau(beta))
    return 1 + 2 * ball_volume(2, 2 * t + beta / 2) / (math.pi * c_disj**2 * t**2)


def beta_fin_bound(beta: float, c_disj: Optional[float] = None) -> float:
    """Bound ``c_edges(beta) * 2 pi / gamma`` on edges deleted by one insertion."""
    gamma = math.asin(1.0 / beta)
    return c_edges(beta, c_disj) * 2 * math.pi / gamma


def model_constants(model: GraphModel, cones: Optional[Sequence[Cone]] = None) -> dict:
    """The structural constants recorded for a model, including ``c_max``.

    ``c_DEG = I_d * c_STA`` with ``I_d`` the number of cones in the default
    cover. For beta-skeletons ``c_FIN`` and ``c_FIN2`` use the certified
    ``c_disj``.
    """
    if cones is None:
        cones = cone_cover(model.dim) if model.dim <= 2 else None
    c_sta = default_c_sta(model)
    if model.kind == "knn":
        out = {"c_fin2": model.k * 4 ** model.dim, "c_sta": c_sta, "c_inf": model.c_inf}
        if cones is not None:
            out["c_deg"] = len(cones) * c_sta
            out["c_fin"] = out["c_deg"]
    elif model.beta == 1:
        # the lens constants degenerate as tau -> 0; no finite bound is claimed
        out = {"c_fin2": math.inf, "c_sta": c_sta, "c_inf": 1, "c_deg": len(cones) * c_sta, "c_fin": math.inf}
    else:
        cd = certified_c_disj(model.beta)
        out = {"c_disj": cd, "c_fin2": 4.0 / cd**2, "c_sta": c_sta, "c_inf": 1,
               "c_deg": len(cones) * c_sta, "c_fin": beta_fin_bound(model.beta, cd)}
    out["c_max"] = max(v for key, v in out.items() if key.startswith("c_") and key != "c_disj")
    return out


# -- planar beta-skeleton geometry ------------------------------------------------

def tangent_configuration(e_length: float, beta: float):
    """Place ``f`` below ``e`` so the segments from ``M(f)`` to ``f``'s ends are tangent to ``C(e)``.

    The chord ``f`` of the lower disk of ``e``'s lens is parametrised by its
    half-angle ``phi`` seen from that disk's centre ``M(e)``. The apex of the
    two tangents from ``f1, f2`` meets the symmetry axis at ``P(phi)``; the
    construction solves ``|f1 - P(phi)| = beta |f| / 2`` for ``phi`` by
    bracketing root finding, so that ``P`` is a valid ``M(f)``.

    Returns ``(e1, e2, f1, f2, M_e, M_f)``.
    """
    L = float(e_length)
    R = beta * L / 2
    h = 0.5 * L * math.sqrt(beta * beta - 1)
    e1, e2 = np.array([-L / 2, 0.0]), np.array([L / 2, 0.0])
    M_e = np.array([0.0, -h])

    def chord(phi):
        f1 = M_e + R * np.array([-math.sin(phi), -math.cos(phi)])
        f2 = M_e + R * np.array([math.sin(phi), -math.cos(phi)])
        # tangent at f1 is perpendicular to f1 - M_e; it meets the axis x = 0 at distance R / cos(phi)
        P = M_e + np.array([0.0, -R / math.cos(phi)])
        return f1, f2, P

    def mismatch(phi):
        f1, f2, P = chord(phi)
        return np.linalg.norm(f1 - P) - beta * np.linalg.norm(f2 - f1) / 2

    phi = brentq(mismatch, 1e-6, math.pi / 2 - 1e-6, xtol=1e-15, rtol=1e-15)
    f1, f2, P = chord(phi)
    return e1, e2, f1, f2, M_e, P


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _segments_cross(p1, p2, q1, q2, eps: float) -> bool:
    d1, d2 = _orient(q1, q2, p1), _orient(q1, q2, p2)
    d3, d4 = _orient(p1, p2, q1), _orient(p1, p2, q2)
    return (d1 > eps and d2 < -eps or d1 < -eps and d2 > eps) and (d3 > eps and d4 < -eps or d3 < -eps and d4 > eps)


def segment_hits_triangle(p, q, tri, eps: float = 1e-12) -> bool:
    """Does the segment ``[p, q]`` meet the interior of triangle ``tri``?"""
    a, b, c = (np.asarray(v, dtype=float) for v in tri)
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    area = _orient(a, b, c)
    sign = 1.0 if area > 0 else -1.0

    def strictly_inside(x):
        return (sign * _orient(a, b, x) > eps and sign * _orient(b, c, x) > eps
                and sign * _orient(c, a, x) > eps)

    if strictly_inside(p) or strictly_inside(q) or strictly_inside(0.5 * (p + q)):
        return True
    return any(_segments_cross(p, q, u, v, eps) for u, v in ((a, b), (b, c), (c, a)))


def _angle_interval(y, e):
    a1 = math.atan2(e[0][1] - y[1], e[0][0] - y[0])
    a2 = math.atan2(e[1][1] - y[1], e[1][0] - y[0])
    width = (a2 - a1) % (2 * math.pi)
    if width > math.pi:
        a1, width = a2, 2 * math.pi - width
    return a1, width


def _cone_subset(y, e, f, eps: float = 1e-12) -> bool:
    """Is the cone at ``y`` spanned by ``e`` contained in the one spanned by ``f``?"""
    ae, we = _angle_interval(y, e)
    af, wf = _angle_interval(y, f)
    start = (ae - af) % (2 * math.pi)
    return start <= wf + eps and start + we <= wf + eps


def recorded_edges(points: np.ndarray, beta: float, y, e) -> list:
    """Edges ``f`` of the beta-skeleton with ``S_y(e)`` inside ``S_y(f)`` and ``y`` in ``C(f)``."""
    model = GraphModel.beta_skeleton(beta)
    indptr, indices = out_arrays(points, model, method="brute")
    y = np.asarray(y, dtype=float)
    seg_e = (points[e[0]], points[e[1]])
    found = []
    for i in range(len(points)):
        for j in indices[indptr[i]:indptr[i + 1]]:
            if j <= i:
                continue
            centres, radii = lens_centres(points[i], points[j][None, :], beta)
            if not np.any(exact_distances(centres[0], y) <= radii[0]):
                continue
            if _cone_subset(y, seg_e, (points[i], points[j])):
                found.append((i, int(j)))
    return found


# -- randomised drivers ----------------------------------------------------------

CONDITIONS = ("FIN", "FIN2", "STA", "CON", "INF", "SCALE")


def _poisson_config(rng: np.random.Generator, side: float, d: int, min_points: int = 2) -> np.ndarray:
    while True:
        m = rng.poisson(side**d)
        if m >= min_points:
            return (rng.random((m, d)) - 0.5) * side


def check_condition(condition: str, model: GraphModel, trials: int, seed: Seed, side: float = 6.0,
                    **kw) -> ConditionReport:
    """Run one condition checker on ``trials`` Poisson configurations in ``[-side/2, side/2]^d``.

    Trial ``i`` draws from replica stream ``i`` of ``seed``. Extra keywords:
    ``M`` (FIN2 radii), ``delta`` (CON jitter), ``additions`` (STA adversarial
    points), ``theta_size`` (INF), ``scale`` (SCALE factor).
    """
    if condition not in CONDITIONS:
        raise ValueError(f"condition must be one of {CONDITIONS}")
    if trials < 1:
        raise ValueError("trials must be positive")
    d = model.dim
    consts = model_constants(model)
    worst = 0.0
    violations = 0
    params = {"side": side, "model": model.to_dict()}
    if condition == "FIN":
        bound = float(consts["c_fin"])
        for t in range(trials):
            rng = seed.rng(t)
            pts = _poisson_config(rng, side, d)
            y = (rng.random(d) - 0.5) * side
            c = affected_nodes_on_insert(PointConfig(pts), model, y)
            worst = max(worst, c)
            violations += c > bound
    elif condition == "FIN2":
        Ms = kw.get("M", (0.5, 1.0, 2.0))
        bound = float(consts["c_fin2"])
        params["M"] = list(Ms)
        for t in range(trials):
            cfg = PointConfig(_poisson_config(seed.rng(t), side, d))
            for M in Ms:
                c = long_edge_count(cfg, model, M)
                worst = max(worst, c)
                violations += c > bound
    elif condition == "STA":
        bound = 0.0
        n_add = int(kw.get("additions", 20))
        params["additions"] = n_add
        cones = cone_cover(d)
        skipped = 0
        for t in range(trials):
            rng = seed.rng(t)
            cfg = PointConfig(_poisson_config(rng, side, d))
            x = int(np.argmin(exact_distances(cfg.points, np.zeros(d))))
            R = stabilization_radii(cfg, x, cones, default_c_sta(model)).overall
            if not math.isfinite(R):
                skipped += 1
                continue
            extra = []
            while len(extra) < n_add:
                cand = cfg.points[x] + (rng.random(d) - 0.5) * 2 * (R + 3)
                if exact_distances(cand[None, :], cfg.points[x])[0] > R and cfg.index_of(cand) is None:
                    extra.append(cand)
            ok = stabilization_holds(cfg, x, model, R, np.array(extra))
            violations += not ok
        worst = float(violations)
        params["skipped_infinite_radius"] = skipped
    elif condition == "CON":
        delta = float(kw.get("delta", 1e-9))
        bound = 0.0
        params["delta"] = delta
        for t in range(trials):
            cfg = PointConfig(_poisson_config(seed.rng(t), side, d))
            rep = continuity_probe(cfg, model, delta, 1, seed.child(f"con{t}"), ladder=1)
            violations += rep.violations > 0
        worst = float(violations)
    elif condition == "INF":
        bound = 0.0
        size = int(kw.get("theta_size", 3))
        params["theta_size"] = size
        for t in range(trials):
            rng = seed.rng(t)
            psi = PointConfig(_poisson_config(rng, side, d, model.c_inf))
            theta = (rng.random((size, d)) - 0.5) * side
            violations += not inf_condition_probe(psi, theta, model)
        worst = float(violations)
    else:
        bound = 0.0
        scale = float(kw.get("scale", 2.0))
        params["scale"] = scale
        for t in range(trials):
            pts = _poisson_config(seed.rng(t), side, d)
            a = out_arrays(pts, model, method="brute")
            b = out_arrays(pts * scale, model, method="brute")
            violations += not (np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1]))
        worst = float(violations)
    return ConditionReport(condition, trials, float(worst), bound, int(violations), params)
