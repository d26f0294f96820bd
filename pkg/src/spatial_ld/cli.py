"""Command-line front end.

Every subcommand accepts ``--config file.json``; keys are flag names with
dashes or underscores. Explicit flags override the file, which overrides the
defaults. The effective configuration is written into each JSON artifact, and
next to each CSV artifact as ``<file>.meta.json``.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import conditions, experiments, geometry, graphs, optimizer, point_process, scores

__all__ = ["main", "run", "ConfigError"]


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


RANDOMISED = {"sample", "mu", "tail", "rate-opt", "check"}


def _model_flags(p, variant=True):
    p.add_argument("--model", choices=["knn", "beta"], help="graph family")
    p.add_argument("--k", type=int, help="neighbours per node (knn)")
    p.add_argument("--beta", type=float, help="lens parameter (beta-skeleton)")
    p.add_argument("--dim", type=int, help="dimension")
    if variant:
        p.add_argument("--variant", choices=["dir", "undir", "bidir"], help="score variant")
        p.add_argument("--alpha", type=float, help="edge-length exponent")


def _common(p):
    p.add_argument("--config", help="JSON file with default values for the flags")
    p.add_argument("--seed", type=int, help="root seed (required for randomised commands)")
    p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--out", help="output path")


DEFAULTS = {
    "model": "knn", "k": 1, "beta": 2.0, "dim": 2, "variant": "dir", "alpha": 1.0, "workers": 1,
    "intensity": 1.0, "n": 8.0, "margin": 4.0, "method": "auto", "replicas": 100_000, "calib_side": 0.0,
    "samples": 1_000_000, "mu_samples": 100_000, "objective": "literal", "restarts": 32, "steps": 20_000,
    "m": "1,8", "trials": 100, "side": 6.0, "delta": 1e-9, "window": None, "r": None, "target_p": None,
    "pilot_samples": 100_000, "mu": None, "hits": None, "runs": None, "inf_a": None, "opt": None,
    "points": None, "condition": None, "m_max": 8, "jitter_scale": 1e-6, "plot": None, "out": None,
    "seed": None, "config": None,
}

# the origin's cone radius has its 99.9% quantile near 10 for the planar NNG
COMMAND_DEFAULTS = {"mu": {"margin": 10.0}}


def _build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="spatial-ld", description=__doc__.splitlines()[0])
    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sample", help="Poisson sample on the centred cube of side n")
    _common(p)
    p.add_argument("--dim", type=int)
    p.add_argument("--n", type=float)
    p.add_argument("--intensity", type=float)

    p = sub.add_parser("graph", help="edge list of a point file")
    _common(p)
    _model_flags(p, variant=False)
    p.add_argument("--points", help="point CSV from 'sample'")
    p.add_argument("--method", choices=["auto", "indexed", "brute"])

    p = sub.add_parser("score", help="window score table of a point file")
    _common(p)
    _model_flags(p)
    p.add_argument("--points")
    p.add_argument("--window", type=float, help="window side; default: the whole configuration")
    p.add_argument("--method", choices=["auto", "indexed", "brute"])

    p = sub.add_parser("mu", help="Monte Carlo mean score of an inserted origin")
    _common(p)
    _model_flags(p)
    p.add_argument("--replicas", type=int)
    p.add_argument("--margin", type=float)
    p.add_argument("--calib-side", type=float)

    p = sub.add_parser("tail", help="tail probability of the windowed functional")
    _common(p)
    _model_flags(p)
    p.add_argument("--n", type=float)
    p.add_argument("--margin", type=float)
    p.add_argument("--r", type=float, help="excess over the windowed mean")
    p.add_argument("--target-p", type=float, help="tune r from a pilot run instead of giving it")
    p.add_argument("--pilot-samples", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--mu", type=float, help="mean to use; default: estimated windowed mean")
    p.add_argument("--mu-samples", type=int)
    p.add_argument("--hits", help="hits CSV path (default: <out> with .hits.csv)")

    p = sub.add_parser("condense", help="condensation statistics of a tail run")
    _common(p)
    p.add_argument("--runs", nargs="+", help="tail run JSON (one)")
    p.add_argument("--hits", help="hits CSV of that run")
    p.add_argument("--m", help="comma-separated m values (at most 8)")

    p = sub.add_parser("rate-opt", help="minimise the influence-zone volume")
    _common(p)
    _model_flags(p)
    p.add_argument("--objective", choices=["literal", "nng-reduced", "nng_reduced"])
    p.add_argument("--restarts", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--m-max", type=int)
    p.add_argument("--jitter-scale", type=float)

    p = sub.add_parser("rate-curve", help="empirical against theoretical rate")
    _common(p)
    p.add_argument("--runs", nargs="+", help="tail run JSON files")
    p.add_argument("--inf-a", type=float, help="rate constant")
    p.add_argument("--opt", help="rate-opt JSON to take the rate constant from")
    p.add_argument("--plot", help="gnuplot script path (default: <out> with .gp)")

    p = sub.add_parser("check", help="structural condition checker")
    _common(p)
    _model_flags(p, variant=False)
    p.add_argument("--condition", choices=list(conditions.CONDITIONS))
    p.add_argument("--trials", type=int)
    p.add_argument("--side", type=float)
    p.add_argument("--delta", type=float)
    return top


def _effective(ns: argparse.Namespace, parser_for_command) -> dict:
    given = {k: v for k, v in vars(ns).items() if v is not None and k != "command"}
    allowed = {a.dest for a in parser_for_command._actions if a.dest != "help"}
    cfg = {}
    if ns.config:
        try:
            raw = json.loads(Path(ns.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"--config: cannot read {ns.config}: {exc}")
        if not isinstance(raw, dict):
            raise ConfigError("--config: top level must be an object")
        for key, val in raw.items():
            dest = key.replace("-", "_")
            if dest not in allowed or dest == "config":
                raise ConfigError(f"--config: unknown key {key!r} for '{ns.command}'")
            cfg[dest] = val
    out = {k: COMMAND_DEFAULTS.get(ns.command, {}).get(k, DEFAULTS.get(k)) for k in allowed if k != "config"}
    out.update(cfg)
    out.update({k: v for k, v in given.items() if k != "config"})
    out["command"] = ns.command
    return out


def _need(cfg, *keys):
    for k in keys:
        if cfg.get(k) is None:
            raise ConfigError(f"--{k.replace('_', '-')} is required for '{cfg['command']}'")


def _model(cfg) -> graphs.GraphModel:
    try:
        if cfg["model"] == "knn":
            return graphs.GraphModel.knn(int(cfg["k"]), int(cfg["dim"]))
        if int(cfg["dim"]) != 2:
            raise ConfigError("--dim: beta-skeletons are planar")
        return graphs.GraphModel.beta_skeleton(float(cfg["beta"]))
    except ValueError as exc:
        raise ConfigError(f"--model: {exc}")


def _variant(cfg) -> scores.ScoreVariant:
    try:
        return scores.ScoreVariant(cfg["variant"], float(cfg["alpha"]))
    except ValueError as exc:
        raise ConfigError(f"--alpha/--variant: {exc}")


def _seed(cfg) -> point_process.Seed:
    return point_process.Seed(int(cfg["seed"]))


def _positive(cfg, *keys):
    for k in keys:
        if cfg.get(k) is not None and not cfg[k] > 0:
            raise ConfigError(f"--{k.replace('_', '-')} must be positive")


def _audit(cfg) -> dict:
    # the worker count never changes a result, so it stays out of the artifacts
    return {k: v for k, v in sorted(cfg.items()) if k != "workers"}


def _write_meta(path, cfg, summary=None):
    meta = {"config": _audit(cfg)}
    if summary:
        meta.update(summary)
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=experiments._plain) + "\n")


def _load_points(cfg) -> point_process.PointConfig:
    _need(cfg, "points")
    try:
        return point_process.read_points_csv(cfg["points"])
    except (OSError, ValueError) as exc:
        raise ConfigError(f"--points: {exc}")


def _cmd_sample(cfg):
    _need(cfg, "out")
    _positive(cfg, "n", "intensity", "dim")
    box = geometry.cube(float(cfg["n"]), int(cfg["dim"]))
    pc = point_process.sample_poisson(box, float(cfg["intensity"]), _seed(cfg))
    point_process.write_points_csv(pc, cfg["out"])
    _write_meta(cfg["out"], cfg, {"points": len(pc)})
    return f"sampled {len(pc)} points -> {cfg['out']}"


def _cmd_graph(cfg):
    _need(cfg, "out")
    pc = _load_points(cfg)
    model = _model(cfg)
    if pc.dim != model.dim:
        raise ConfigError(f"--dim: points are {pc.dim}-dimensional")
    adj = graphs.build_adjacency(pc, model, cfg["method"])
    graphs.write_edges_csv(adj, cfg["out"])
    _write_meta(cfg["out"], cfg, {"arcs": int(len(adj.indices))})
    return f"{len(adj.indices)} arcs -> {cfg['out']}"


def _cmd_score(cfg):
    _need(cfg, "out")
    pc = _load_points(cfg)
    model = _model(cfg)
    if pc.dim != model.dim:
        raise ConfigError(f"--dim: points are {pc.dim}-dimensional")
    variant = _variant(cfg)
    adj = graphs.build_adjacency(pc, model, cfg["method"])
    if cfg["window"] is None:
        side = 2 * float(np.abs(pc.points).max()) if len(pc) else 0.0
        window, norm = geometry.cube(side, pc.dim), 1.0
    else:
        _positive(cfg, "window")
        window, norm = geometry.cube(float(cfg["window"]), pc.dim), float(cfg["window"])
    table = scores.score_table(adj, window, variant)
    H = scores.functional_Hn(adj, window, norm, variant)
    scores.write_score_table_csv(table, cfg["out"])
    _write_meta(cfg["out"], cfg, {"H_n": H, "window_nodes": len(table)})
    return f"H_n = {H:.10g} over {len(table)} window nodes -> {cfg['out']}"


def _cmd_mu(cfg):
    _need(cfg, "out")
    _positive(cfg, "replicas", "workers")
    model, variant = _model(cfg), _variant(cfg)
    mean, se = scores.estimate_mu(model, variant, float(cfg["calib_side"]), float(cfg["margin"]),
                                  int(cfg["replicas"]), _seed(cfg), int(cfg["workers"]))
    out = {"mu": mean, "std_error": se, "config": _audit(cfg)}
    if model.is_nng and variant.tag == "dir":
        out["closed_form"] = scores.nng_mu_closed_form(model.dim, variant.alpha)
    _write_json(cfg["out"], out)
    return f"mu = {mean:.6g} +- {se:.2g} -> {cfg['out']}"


def _cmd_tail(cfg):
    _need(cfg, "out")
    _positive(cfg, "n", "samples", "workers", "mu_samples", "pilot_samples")
    model, variant = _model(cfg), _variant(cfg)
    if not variant.alpha > model.dim:
        raise ConfigError("--alpha must exceed --dim for tail runs")
    if (cfg["r"] is None) == (cfg["target_p"] is None):
        raise ConfigError("--r: give exactly one of --r and --target-p")
    seed = _seed(cfg)
    workers = int(cfg["workers"])
    setup = experiments.TailSetup(model, variant, float(cfg["n"]), float(cfg["margin"]))
    extra = {}
    mu = cfg["mu"]
    if mu is None:
        mu, se = experiments.windowed_mean(setup, int(cfg["mu_samples"]), seed.child("mu"), workers)
        extra.update({"mu_windowed": mu, "mu_windowed_se": se})
    r = cfg["r"]
    if r is None:
        r = experiments.tune_r(setup, float(cfg["target_p"]), int(cfg["pilot_samples"]), seed.child("pilot"),
                               mu, workers)
        extra["r_tuned_for_p"] = float(cfg["target_p"])
    stats = experiments.simulate_replicas(setup, int(cfg["samples"]), seed, workers)
    rec = experiments.tail_record(setup, stats, float(r), float(mu), seed, extra)
    hits = cfg["hits"] or str(Path(cfg["out"]).with_suffix("")) + ".hits.csv"
    experiments.write_run_json(rec, cfg["out"], _audit(cfg))
    experiments.write_hits_csv(rec, hits)
    return f"p_hat = {rec.p_hat:.4g} ({rec.hits}/{rec.samples}), CI {rec.ci95[0]:.3g}..{rec.ci95[1]:.3g} -> {cfg['out']}"


def _record_from_json(path, hits_path=None) -> experiments.TailRunRecord:
    try:
        d = json.loads(Path(path).read_text())
        mdl = d["model"]
        model = (graphs.GraphModel.knn(mdl["k"], mdl["dim"]) if mdl["kind"] == "knn"
                 else graphs.GraphModel.beta_skeleton(mdl["beta"]))
        setup = experiments.TailSetup(model, scores.ScoreVariant(d["variant"], d["alpha"]), d["n"], d["margin"])
        seed = point_process.Seed(d["seed"]["root"], d["seed"]["stream"])
        if hits_path is not None:
            rep, H, Z = experiments.read_hits_csv(hits_path)
        else:
            rep, H, Z = np.zeros(0, dtype=int), np.zeros(0), np.zeros((0, experiments.TOP))
        return experiments.TailRunRecord(setup, d["r"], d["mu_used"], d["samples"], d["hits"], d["p_hat"],
                                         tuple(d["ci95"]), seed, rep, H, Z)
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"--runs: cannot read tail record {path}: {exc}")


def _cmd_condense(cfg):
    _need(cfg, "out", "runs")
    if len(cfg["runs"]) != 1:
        raise ConfigError("--runs: condense takes exactly one run")
    run = cfg["runs"][0]
    hits = cfg["hits"] or str(Path(run).with_suffix("")) + ".hits.csv"
    try:
        ms = [int(v) for v in str(cfg["m"]).split(",")]
    except ValueError:
        raise ConfigError("--m: expected comma-separated integers")
    if any(not 1 <= m <= experiments.TOP for m in ms):
        raise ConfigError(f"--m: values must lie in 1..{experiments.TOP}")
    rec = _record_from_json(run, hits)
    summaries = experiments.condensation_stats(rec, ms)
    _write_json(cfg["out"], {"condensation": [s.to_dict() for s in summaries], "run": rec.to_dict(),
                             "config": _audit(cfg)})
    med = ", ".join(f"m={s.m}: {s.quantiles[1]:.4g}" for s in summaries)
    return f"median fractions {med} over {rec.hits} hits -> {cfg['out']}"


def _cmd_rate_opt(cfg):
    _need(cfg, "out")
    _positive(cfg, "restarts", "steps", "workers")
    model, variant = _model(cfg), _variant(cfg)
    if not variant.alpha > model.dim:
        raise ConfigError("--alpha must exceed --dim")
    objective = cfg["objective"].replace("-", "_")
    if objective == "nng_reduced" and not model.is_nng:
        raise ConfigError("--objective: nng-reduced needs --model knn --k 1")
    if model.dim > 2 and model.kind != "knn":
        raise ConfigError("--dim: beta-skeletons are planar")
    params = optimizer.AnnealParams(restarts=int(cfg["restarts"]), steps_per_restart=int(cfg["steps"]),
                                    m_max=int(cfg["m_max"]), jitter_scale=float(cfg["jitter_scale"]),
                                    seed=_seed(cfg))
    res = optimizer.optimize_rate(model, variant, objective, params, int(cfg["workers"]))
    res.to_json(cfg["out"], {"config": _audit(cfg)})
    return f"best volume {res.best_volume:.6g} with {len(res.best.pair.psi)} points -> {cfg['out']}"


def _cmd_rate_curve(cfg):
    _need(cfg, "out", "runs")
    inf_a = cfg["inf_a"]
    if inf_a is None:
        if cfg["opt"] is None:
            raise ConfigError("--inf-a: give --inf-a or --opt")
        try:
            inf_a = json.loads(Path(cfg["opt"]).read_text())["best_volume"]
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            raise ConfigError(f"--opt: {exc}")
    records = [_record_from_json(p) for p in cfg["runs"]]
    try:
        rows = experiments.rate_curve(records, float(inf_a))
    except ValueError as exc:
        raise ConfigError(f"--runs: {exc}")
    experiments.write_rate_curve(rows, cfg["out"], cfg["plot"])
    _write_meta(cfg["out"], cfg, {"inf_A": float(inf_a)})
    usable = sum(r.usable for r in rows)
    return f"{len(rows)} rows ({usable} usable) -> {cfg['out']}"


def _cmd_check(cfg):
    _need(cfg, "out", "condition")
    _positive(cfg, "trials", "side")
    model = _model(cfg)
    rep = conditions.check_condition(cfg["condition"], model, int(cfg["trials"]), _seed(cfg),
                                     float(cfg["side"]), delta=float(cfg["delta"]))
    rep.params["config"] = _audit(cfg)
    rep.to_json(cfg["out"])
    return (f"{rep.condition}: worst {rep.worst_observed:g}, bound {rep.bound_claimed:g}, "
            f"{rep.violations} violations in {rep.trials} trials -> {cfg['out']}")


COMMANDS = {
    "sample": _cmd_sample, "graph": _cmd_graph, "score": _cmd_score, "mu": _cmd_mu, "tail": _cmd_tail,
    "condense": _cmd_condense, "rate-opt": _cmd_rate_opt, "rate-curve": _cmd_rate_curve, "check": _cmd_check,
}


def run(argv=None) -> int:
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
        sub = parser._subparsers._group_actions[0].choices[ns.command]
        cfg = _effective(ns, sub)
        if ns.command in RANDOMISED:
            _need(cfg, "seed")
        if cfg.get("workers") is not None and int(cfg["workers"]) < 1:
            raise ConfigError("--workers must be >= 1")
        message = COMMANDS[ns.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(message)
    return 0


def main() -> None:
    sys.exit(run())
