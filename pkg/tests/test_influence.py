import math

import numpy as np
import pytest

from spatial_ld.geometry import exact_distances, lens_contains
from spatial_ld.graphs import GraphModel
from spatial_ld.influence import (ConfigPair, in_influence_zone, in_influence_zone_recompute, influence_bounding,
                                  influence_volume, nng_reduced_disks, phi_score_sum, protected_nodes,
                                  zone_disks, zone_membership)
from spatial_ld.point_process import PointConfig, Seed
from spatial_ld.scores import ScoreVariant

NNG = GraphModel.knn(1, 2)
BASIC = ConfigPair([0], [[0, 0], [1, 0]], NNG)
TWO_DISKS = 4 * math.pi / 3 + math.sqrt(3) / 2


def random_pairs(count, seed, model, lo=3, hi=8):
    rng = Seed(seed).rng()
    for _ in range(count):
        m = int(rng.integers(lo, hi + 1))
        pts = rng.random((m, model.dim)) * 3
        phi = np.flatnonzero(rng.random(m) < 0.4)
        yield ConfigPair(phi if len(phi) else [0], pts, model)


def test_membership_examples():
    for pred in (in_influence_zone, in_influence_zone_recompute):
        assert pred(BASIC, [0.3, 0])
        assert not pred(BASIC, [5, 5])
        assert pred(BASIC, [1.05, 0])  # steals the neighbour of the protected out-neighbour
    with pytest.raises(ValueError):
        in_influence_zone(BASIC, [1, 0])


def test_pair_validation():
    with pytest.raises(ValueError):
        ConfigPair([3], [[0, 0], [1, 0]], NNG)
    with pytest.raises(ValueError):
        ConfigPair([0], [[0, 0, 0], [1, 0, 0]], NNG)
    p = ConfigPair([1, 0, 1], [[0, 0], [1, 0]], NNG)
    assert p.phi.tolist() == [0, 1]
    assert protected_nodes(BASIC) == {0, 1}
    assert phi_score_sum(ConfigPair([0], [[0, 0], [2, 0]], NNG, ScoreVariant("dir", 15))) == 2**15


def test_volume_examples():
    est = influence_volume(BASIC)
    assert est.volume.value == pytest.approx(TWO_DISKS, rel=1e-12)
    q = influence_volume(BASIC, "quadrature", rel_tol=1e-5)
    assert abs(q.volume.value - TWO_DISKS) <= q.volume.bracket
    mc = influence_volume(BASIC, "mc", samples=200_000, seed=Seed(1))
    assert abs(mc.volume.value - TWO_DISKS) < 3 * mc.volume.std_error
    assert influence_volume(BASIC, "nng_balls").volume.value == pytest.approx(math.pi, rel=1e-12)


def circle_overlap(R, r, dist):
    """Area of the intersection of two disks with radii R, r at centre distance dist."""
    a = r * r * math.acos((dist * dist + r * r - R * R) / (2 * dist * r))
    b = R * R * math.acos((dist * dist + R * R - r * r) / (2 * dist * R))
    c = 0.5 * math.sqrt((-dist + r + R) * (dist + r - R) * (dist - r + R) * (dist + r + R))
    return a + b - c


def test_satellite_volume():
    pair = ConfigPair([0], [[0, 0], [1, 0], [1.01, 0]], NNG)
    assert protected_nodes(pair) == {0, 1}
    vol = influence_volume(pair).volume.value
    # unit disk at the origin plus the radius 0.01 disk of the protected out-neighbour;
    # the satellite itself is not protected and contributes no disk
    oracle = math.pi + math.pi * 1e-4 - circle_overlap(1.0, 0.01, 1.0)
    assert vol == pytest.approx(oracle, rel=1e-12)
    assert 0 < vol - math.pi < 1e-3


def test_nng_balls_unsupported_elsewhere():
    with pytest.raises(NotImplementedError):
        influence_volume(ConfigPair([0], [[0, 0], [1, 0], [0, 1]], GraphModel.knn(2, 2)), "nng_balls")
    with pytest.raises(NotImplementedError):
        nng_reduced_disks(ConfigPair([0], [[0, 0], [1, 0]], GraphModel.beta_skeleton(1.2)))
    with pytest.raises(ValueError):
        influence_volume(BASIC, "mc")


def test_bounding_examples():
    box = influence_bounding(BASIC)
    assert np.all(box.lower <= [-1, -1]) and np.all(box.upper >= [2, 1])
    beta = 1.2
    pair = ConfigPair([0], [[0, 0], [1, 0]], GraphModel.beta_skeleton(beta))
    box = influence_bounding(pair)
    ys = np.random.default_rng(0).uniform(-2, 3, size=(20000, 2))
    inside = np.array([lens_contains([0, 0], [1, 0], beta, y) for y in ys[:4000]])
    assert box.contains(ys[:4000][inside]).all()


@pytest.mark.parametrize("model", [GraphModel.knn(1, 2), GraphModel.knn(3, 2), GraphModel.beta_skeleton(1.3)])
def test_bounding_audit(model):
    rng = Seed(3).rng()
    for pair in random_pairs(3, 4, model, lo=model.c_inf + 1):
        box = influence_bounding(pair)
        wide = box.inflate(rel=1.0)
        ys = wide.lower + wide.widths * rng.random((1_000_000 // 3, 2))
        hits = ys[zone_membership(pair, ys)]
        assert len(hits) > 0 and box.contains(hits).all()


@pytest.mark.parametrize("model", [GraphModel.knn(1, 2), GraphModel.knn(2, 2), GraphModel.beta_skeleton(1.2),
                                   GraphModel.beta_skeleton(2.0)])
def test_fast_predicate_equals_recompute(model):
    rng = Seed(5).rng()
    for pair in random_pairs(8, 6, model, lo=model.c_inf):
        box = influence_bounding(pair).inflate(rel=0.5)
        ys = box.lower + box.widths * rng.random((150, 2))
        fast = zone_membership(pair, ys)
        slow = np.array([in_influence_zone_recompute(pair, y) for y in ys])
        assert np.array_equal(fast, slow)


def test_nng_pointwise_identity():
    rng = Seed(7).rng()
    for pair in random_pairs(5, 8, NNG, lo=2):
        pts = pair.psi.points
        prot = sorted(protected_nodes(pair))
        radii = []
        for x in prot:
            others = np.delete(pts, x, axis=0)
            radii.append(exact_distances(others, pts[x]).min())
        box = influence_bounding(pair).inflate(rel=0.5)
        ys = box.lower + box.widths * rng.random((10_000, 2))
        in_k = np.zeros(len(ys), dtype=bool)
        for x, r in zip(prot, radii):
            in_k |= exact_distances(ys, pts[x]) < r
        assert np.array_equal(zone_membership(pair, ys), in_k)
        sub = ys[:300]
        assert np.array_equal(np.array([in_influence_zone_recompute(pair, y) for y in sub]), in_k[:300])


@pytest.mark.parametrize("tau", [0.5, 2.0])
def test_scale_covariance(tau):
    for model in (NNG, GraphModel.knn(2, 2), GraphModel.beta_skeleton(1.2)):
        for pair in random_pairs(20, 9, model, lo=model.c_inf):
            a = influence_volume(pair).volume.value
            b = influence_volume(pair.scaled(tau)).volume.value
            assert b == pytest.approx(tau**2 * a, rel=1e-9)


def test_scale_covariance_monte_carlo():
    for i, pair in enumerate(random_pairs(3, 10, NNG)):
        a = influence_volume(pair, "mc", samples=100_000, seed=Seed(11).child(str(i)))
        b = influence_volume(pair.scaled(2.0), "mc", samples=100_000, seed=Seed(12).child(str(i)))
        se = math.hypot(4 * a.volume.std_error, b.volume.std_error)
        assert abs(b.volume.value - 4 * a.volume.value) < 3 * se


def test_rigid_motion_invariance():
    theta = 1.1
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    for model in (NNG, GraphModel.knn(2, 2), GraphModel.beta_skeleton(1.5)):
        for pair in random_pairs(10, 13, model, lo=model.c_inf):
            moved = ConfigPair(pair.phi, PointConfig(pair.psi.points @ rot.T + [4.0, -1.5]), model)
            if protected_nodes(moved) != protected_nodes(pair):
                continue  # a near tie flipped under rounding
            a = influence_volume(pair).volume.value
            b = influence_volume(moved).volume.value
            assert b == pytest.approx(a, rel=1e-9)


def test_monotone_in_phi():
    rng = Seed(14).rng()
    for model in (NNG, GraphModel.knn(2, 2), GraphModel.beta_skeleton(1.2)):
        for pair in random_pairs(10, 15, model, lo=4):
            extra = int(rng.integers(len(pair.psi)))
            big = ConfigPair(np.append(pair.phi, extra), pair.psi, model)
            box = influence_bounding(big).inflate(rel=0.3)
            ys = box.lower + box.widths * rng.random((5000, 2))
            small_hit, big_hit = zone_membership(pair, ys), zone_membership(big, ys)
            assert np.all(big_hit[small_hit])
            assert influence_volume(big).volume.value >= influence_volume(pair).volume.value - 1e-12


def test_zone_independent_of_variant():
    pts = Seed(16).rng().random((6, 2)) * 3
    vols = {v: influence_volume(ConfigPair([0, 2], pts, NNG, ScoreVariant(v, 3.0))).volume.value
            for v in ("dir", "undir", "bidir")}
    assert len(set(vols.values())) == 1


def test_exact_matches_quadrature_beta():
    for pair in random_pairs(3, 17, GraphModel.beta_skeleton(1.2)):
        e = influence_volume(pair, "exact").volume.value
        q = influence_volume(pair, "quadrature", rel_tol=1e-4).volume
        assert abs(e - q.value) <= q.bracket + 1e-12


def test_zone_disks_and_dict():
    c, r = zone_disks(BASIC)
    assert np.allclose(sorted(r), [1, 1])
    d = influence_volume(BASIC).to_dict()
    assert d["protected_nodes"] == [0, 1] and d["volume"]["method"] == "closed_form"
