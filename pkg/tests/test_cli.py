import json
import math
import subprocess
import sys

import numpy as np
import pytest

from spatial_ld.cli import run
from spatial_ld.geometry import cube
from spatial_ld.graphs import GraphModel, build_adjacency
from spatial_ld.point_process import Seed, read_points_csv, sample_poisson
from spatial_ld.scores import ScoreVariant, functional_Hn, score_table


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def test_sample_graph_score_round_trip(work, capsys):
    assert run(["sample", "--dim", "2", "--n", "8", "--intensity", "1", "--seed", "7", "--out", "pts.csv"]) == 0
    pc = read_points_csv("pts.csv")
    direct = sample_poisson(cube(8, 2), 1.0, Seed(7))
    assert pc.points.tobytes() == direct.points.tobytes()
    meta = json.loads((work / "pts.csv.meta.json").read_text())
    assert meta["config"]["seed"] == 7 and meta["points"] == len(pc)

    assert run(["graph", "--points", "pts.csv", "--model", "knn", "--k", "2", "--out", "edges.csv"]) == 0
    adj = build_adjacency(direct, GraphModel.knn(2, 2))
    lines = (work / "edges.csv").read_text().splitlines()
    src, dst = adj.arcs()
    lens = adj.arc_lengths()
    assert lines == [f"{s},{t},{l:.17g}" for s, t, l in zip(src, dst, lens)]

    assert run(["score", "--points", "pts.csv", "--model", "knn", "--k", "2", "--alpha", "3",
                "--window", "6", "--out", "scores.csv"]) == 0
    v = ScoreVariant("dir", 3.0)
    table = score_table(adj, cube(6, 2), v)
    rows = (work / "scores.csv").read_text().splitlines()[1:]
    assert [float(r.split(",")[-1]) for r in rows] == table.per_node_score.tolist()
    meta = json.loads((work / "scores.csv.meta.json").read_text())
    assert meta["H_n"] == functional_Hn(adj, cube(6, 2), 6.0, v)
    assert "H_n" in capsys.readouterr().out


def test_sample_count_distribution(work):
    counts = []
    for s in range(40):
        assert run(["sample", "--n", "8", "--seed", str(s), "--out", "p.csv"]) == 0
        counts.append(len(read_points_csv("p.csv")))
    assert abs(np.mean(counts) - 64) < 3 * 8 / math.sqrt(40)


@pytest.mark.parametrize("argv, flag", [
    (["sample", "--n", "8", "--out", "x.csv"], "--seed"),
    (["sample", "--n", "-1", "--seed", "1", "--out", "x.csv"], "--n"),
    (["tail", "--alpha", "2", "--dim", "2", "--r", "1", "--seed", "1", "--out", "x.json"], "--alpha"),
    (["tail", "--alpha", "15", "--seed", "1", "--out", "x.json"], "--r"),
    (["rate-opt", "--model", "knn", "--k", "2", "--alpha", "15", "--objective", "nng-reduced", "--seed", "1",
      "--out", "x.json"], "--objective"),
    (["mu", "--model", "beta", "--beta", "0.5", "--alpha", "3", "--seed", "1", "--out", "x.json"], "--model"),
    (["graph", "--model", "knn", "--out", "x.csv"], "--points"),
    (["check", "--condition", "FIN", "--seed", "1", "--out", "x.json", "--workers", "0"], "--workers"),
    (["sample", "--bogus", "1"], "unrecognized"),
])
def test_config_errors_exit_2(work, capsys, argv, flag):
    assert run(argv) == 2
    assert flag in capsys.readouterr().err


def test_unknown_command_exit_2(capsys):
    assert run(["frobnicate"]) == 2


def test_runtime_error_exit_1(work, capsys):
    assert run(["sample", "--n", "3", "--seed", "1", "--out", "missing_dir/p.csv"]) == 1
    assert "failed" in capsys.readouterr().err


def test_bad_input_files_exit_2(work):
    (work / "bad.csv").write_text("dim=2\n0,0\n0,0\n")
    assert run(["graph", "--points", "bad.csv", "--out", "e.csv"]) == 2
    (work / "run.json").write_text("{}")
    assert run(["rate-curve", "--runs", "run.json", "--inf-a", "3.14", "--out", "c.csv"]) == 2


def test_config_precedence_and_unknown_keys(work):
    (work / "cfg.json").write_text(json.dumps({"n": 4, "dim": 2, "seed": 3, "intensity": 2.0}))
    assert run(["sample", "--config", "cfg.json", "--n", "5", "--out", "p.csv"]) == 0
    meta = json.loads((work / "p.csv.meta.json").read_text())["config"]
    assert meta["n"] == 5 and meta["seed"] == 3 and meta["intensity"] == 2.0
    assert read_points_csv("p.csv") == sample_poisson(cube(5, 2), 2.0, Seed(3))
    (work / "bad.json").write_text(json.dumps({"n": 4, "restarts": 3}))
    assert run(["sample", "--config", "bad.json", "--seed", "1", "--out", "p.csv"]) == 2
    (work / "list.json").write_text("[1]")
    assert run(["sample", "--config", "list.json", "--seed", "1", "--out", "p.csv"]) == 2


def test_mu_command_reports_closed_form(work):
    assert run(["mu", "--alpha", "3", "--replicas", "2000", "--seed", "4", "--out", "mu.json"]) == 0
    data = json.loads((work / "mu.json").read_text())
    assert data["closed_form"] == pytest.approx(0.238732, abs=1e-6)
    assert abs(data["mu"] - data["closed_form"]) < 4 * data["std_error"]
    assert data["config"]["margin"] == 10.0 and "workers" not in data["config"]


def test_tail_condense_rate_curve_pipeline(work):
    base = ["--alpha", "15", "--n", "4", "--margin", "3", "--samples", "3000", "--mu-samples", "1000", "--seed", "3"]
    assert run(["tail", *base, "--r", "5", "--out", "run.json"]) == 0
    first = (work / "run.json").read_bytes()
    assert run(["tail", *base, "--r", "5", "--out", "run.json", "--workers", "2"]) == 0
    assert (work / "run.json").read_bytes() == first
    data = json.loads(first)
    assert data["p_hat"] == data["hits"] / data["samples"] and data["config"]["r"] == 5
    assert (work / "run.hits.csv").exists()

    assert run(["tail", *base, "--target-p", "0.05", "--pilot-samples", "2000", "--out", "run2.json"]) == 0
    d2 = json.loads((work / "run2.json").read_text())
    assert d2["r_tuned_for_p"] == 0.05 and 0.02 < d2["p_hat"] < 0.1

    assert run(["condense", "--runs", "run2.json", "--m", "1,8", "--out", "cond.json"]) == 0
    cond = json.loads((work / "cond.json").read_text())["condensation"]
    assert [c["m"] for c in cond] == [1, 8] and cond[0]["quantiles"][1] <= cond[1]["quantiles"][1]
    assert run(["condense", "--runs", "run2.json", "--m", "9", "--out", "cond.json"]) == 2

    assert run(["rate-opt", "--alpha", "15", "--objective", "nng-reduced", "--restarts", "2", "--steps", "500",
                "--seed", "1", "--out", "opt.json"]) == 0
    opt = json.loads((work / "opt.json").read_text())
    assert opt["best_volume"] == pytest.approx(math.pi, rel=0.05) and opt["config"]["seed"] == 1
    assert run(["rate-curve", "--runs", "run.json", "run2.json", "--opt", "opt.json", "--out", "curve.csv"]) == 0
    lines = (work / "curve.csv").read_text().splitlines()
    assert lines[0] == "r,empirical,theoretical,hits" and len(lines) == 3
    assert (work / "curve.gp").exists() and (work / "curve.csv.meta.json").exists()


def test_check_command(work):
    assert run(["check", "--condition", "FIN2", "--trials", "20", "--seed", "2", "--out", "c.json"]) == 0
    rep = json.loads((work / "c.json").read_text())
    assert rep["violations"] == 0 and rep["params"]["config"]["condition"] == "FIN2"


def test_module_entry_point(work):
    out = subprocess.run([sys.executable, "-m", "spatial_ld", "sample", "--n", "3", "--seed", "1", "--out", "p.csv"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "sampled" in out.stdout
