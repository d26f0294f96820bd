import math

import numpy as np
import pytest
from scipy.integrate import quad

from spatial_ld.geometry import Box, cube
from spatial_ld.graphs import GraphModel, build_adjacency
from spatial_ld.point_process import PointConfig, Seed
from spatial_ld.scores import (ScoreTable, ScoreVariant, estimate_mu, functional_Hn, nng_mu_closed_form,
                               node_scores, order_statistics, score_node, score_table, write_score_table_csv)

PAIR = PointConfig([[0, 0], [2, 0]])
LINE = PointConfig([[0, 0], [1, 0], [3, 0]])


def random_configs(count, seed):
    rng = Seed(seed).rng()
    for _ in range(count):
        m = int(rng.integers(3, 80))
        yield PointConfig(rng.random((m, 2)) * math.sqrt(m))


def mu_by_integration(d, alpha):
    # E[D^alpha] = int_0^inf P(D > t^(1/alpha)) dt with P(D > s) = exp(-kappa_d s^d)
    kappa = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
    val, _ = quad(lambda t: math.exp(-kappa * t ** (d / alpha)), 0, math.inf, limit=500)
    return val


def test_variant_validation():
    with pytest.raises(ValueError):
        ScoreVariant("both", 1.0)
    with pytest.raises(ValueError):
        ScoreVariant("dir", 0.0)


def test_score_examples():
    adj = build_adjacency(PAIR, GraphModel.knn(1, 2))
    assert score_node(adj, 0, ScoreVariant("dir", 3)) == 8
    assert score_node(adj, 1, ScoreVariant("undir", 3)) == 4
    line = build_adjacency(LINE, GraphModel.knn(1, 2))
    assert score_node(line, 2, ScoreVariant("bidir", 2)) == 0
    assert score_node(line, 2, ScoreVariant("undir", 2)) == 4
    with pytest.raises(IndexError):
        score_node(line, 3, ScoreVariant("dir", 1))


def test_functional_examples():
    adj = build_adjacency(PAIR, GraphModel.knn(1, 2))
    assert functional_Hn(adj, Box([-1, -1], [3, 1]), 1.0, ScoreVariant("dir", 3)) == 16
    assert functional_Hn(adj, Box([10, 10], [11, 11]), 1.0, ScoreVariant("dir", 3)) == 0
    assert functional_Hn(adj, Box([-1, -1], [3, 1]), 2.0, ScoreVariant("dir", 3)) == 4


def test_variant_identities():
    for pc in random_configs(100, 1):
        for model in (GraphModel.knn(2, 2), GraphModel.beta_skeleton(1.2)):
            adj = build_adjacency(pc, model)
            s = {t: node_scores(adj, ScoreVariant(t, 2.5)) for t in ("dir", "undir", "bidir")}
            assert np.allclose(s["dir"], s["undir"] + s["bidir"], rtol=0, atol=1e-12 * max(1, s["dir"].max()))
            assert np.all(s["bidir"] >= 0) and np.all(s["bidir"] <= 0.5 * s["dir"] + 1e-12)
            assert np.all(s["undir"] >= 0.5 * s["dir"] - 1e-12) and np.all(s["undir"] <= s["dir"] + 1e-12)


def test_undirected_sum_counts_each_edge_once():
    for pc in random_configs(30, 2):
        adj = build_adjacency(pc, GraphModel.knn(2, 2))
        edges = {tuple(sorted(e)) for e in adj.edge_set()}
        pts = pc.points
        total = sum(np.linalg.norm(pts[i] - pts[j]) ** 1.7 for i, j in edges)
        assert node_scores(adj, ScoreVariant("undir", 1.7)).sum() == pytest.approx(total, rel=1e-12)


@pytest.mark.parametrize("tau", [0.5, 2.0])
def test_scaling_law(tau):
    for pc in random_configs(100, 3):
        adj = build_adjacency(pc, GraphModel.knn(1, 2))
        adj_t = build_adjacency(pc.scaled(tau), GraphModel.knn(1, 2))
        for tag in ("dir", "undir", "bidir"):
            v = ScoreVariant(tag, 3.3)
            assert np.allclose(node_scores(adj_t, v), tau**3.3 * node_scores(adj, v), rtol=1e-9, atol=0)


def test_order_statistics():
    assert order_statistics(np.array([8.0, 1.0, 8.0]), 2).tolist() == [8, 8]
    assert order_statistics(np.zeros(0), 3).tolist() == [0, 0, 0]
    rng = np.random.default_rng(0)
    x = rng.random(17)
    assert order_statistics(x, 17).sum() == pytest.approx(x.sum())
    with pytest.raises(ValueError):
        order_statistics(x, 0)


def test_score_table_and_csv(tmp_path):
    adj = build_adjacency(LINE, GraphModel.knn(1, 2))
    table = score_table(adj, Box([-0.5, -1], [1.5, 1]), ScoreVariant("dir", 1))
    assert table.node_index.tolist() == [0, 1] and isinstance(table, ScoreTable)
    write_score_table_csv(table, tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "node_index,x_1,x_2,score"


def test_closed_form_matches_integration():
    for d, alpha in ((1, 2.0), (2, 3.0), (2, 15.0), (3, 4.0)):
        assert nng_mu_closed_form(d, alpha) == pytest.approx(mu_by_integration(d, alpha), rel=1e-8)
    assert nng_mu_closed_form(2, 3) == pytest.approx(0.23873, abs=1e-5)


def test_estimate_mu_alpha3():
    mean, se = estimate_mu(GraphModel.knn(1, 2), ScoreVariant("dir", 3.0), replicas=20_000, seed=Seed(11))
    assert abs(mean - nng_mu_closed_form(2, 3)) < 3 * se


def test_estimate_mu_requires_seed_and_is_worker_invariant():
    with pytest.raises(ValueError):
        estimate_mu(GraphModel.knn(1, 2), ScoreVariant("dir", 3.0), replicas=10)
    a = estimate_mu(GraphModel.knn(1, 2), ScoreVariant("dir", 3.0), replicas=6000, seed=Seed(3), workers=1)
    b = estimate_mu(GraphModel.knn(1, 2), ScoreVariant("dir", 3.0), replicas=6000, seed=Seed(3), workers=2)
    assert a == b


def test_bidir_mean_below_dir():
    d = estimate_mu(GraphModel.knn(1, 2), ScoreVariant("dir", 2.0), replicas=2000, seed=Seed(8))[0]
    b = estimate_mu(GraphModel.knn(1, 2), ScoreVariant("bidir", 2.0), replicas=2000, seed=Seed(8))[0]
    assert b <= d


def test_estimate_mu_warns_on_small_margin():
    with pytest.warns(RuntimeWarning):
        estimate_mu(GraphModel.knn(1, 2), ScoreVariant("dir", 3.0), margin=1.0, replicas=200, seed=Seed(1))
