import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spatial_ld.geometry import (Box, Cone, Region, VolumeEstimate, angle_at, ball_volume, cone_cover, cube,
                                 disk_union_area, disk_union_region, exact_distances, lens_contains, lens_disks,
                                 lens_interior_contains, region_volume_mc, region_volume_quadrature, ball_union_volume,
                                 unit_ball_samples, disk_components, disk_union_quadrature)
from spatial_ld.point_process import Seed

coord = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


def two_disk_union(r, dist):
    """Union area of two disks of radius r at centre distance dist <= 2r."""
    lens = 2 * r * r * math.acos(dist / (2 * r)) - 0.5 * dist * math.sqrt(4 * r * r - dist * dist)
    return 2 * math.pi * r * r - lens


def test_box_basics():
    b = Box([0, 0], [2, 3])
    assert b.dim == 2 and b.volume == 6
    assert b.contains(np.array([[0, 0], [2, 3], [2.1, 0]])).tolist() == [True, True, False]
    assert np.allclose(b.inflate(rel=0.5).widths, [3, 4.5])
    with pytest.raises(ValueError):
        Box([1, 0], [0, 1])
    with pytest.raises(ValueError):
        Box([0, 0], [np.inf, 1])


def test_cube_is_centred():
    c = cube(8, 2)
    assert np.array_equal(c.lower, [-4, -4]) and c.volume == 64


def test_ball_volume_values():
    assert ball_volume(1) == pytest.approx(2)
    assert ball_volume(2) == pytest.approx(math.pi)
    assert ball_volume(3, 2) == pytest.approx(4 / 3 * math.pi * 8)
    with pytest.raises(ValueError):
        ball_volume(0)
    with pytest.raises(ValueError):
        ball_volume(2, -1)


def test_exact_distances_symmetric_bits():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(50, 3)), rng.normal(size=(50, 3))
    d1 = np.array([exact_distances(a[i:i + 1], b[i])[0] for i in range(50)])
    d2 = np.array([exact_distances(b[i:i + 1], a[i])[0] for i in range(50)])
    assert np.array_equal(d1, d2)
    assert np.allclose(d1, np.linalg.norm(a - b, axis=1))


def test_angle_at():
    assert angle_at([1, 0], [0, 0], [0, 1]) == pytest.approx(math.pi / 2)
    with pytest.raises(ValueError):
        angle_at([0, 0], [0, 0], [1, 1])


def test_lens_disks_gabriel_is_diametral_disk():
    centres, r = lens_disks([0, 0], [2, 0], 1.0)
    assert np.allclose(centres, [[1, 0], [1, 0]]) and r == 1
    with pytest.raises(ValueError):
        lens_disks([0, 0], [1, 0], 0.5)


@pytest.mark.parametrize("beta", [1.0, 1.2, 2.0, 3.5])
def test_lens_membership_matches_angle_rule(beta):
    # inscribed angles: on the outer arcs of the two disks the edge subtends arcsin(1/beta)
    rng = np.random.default_rng(1)
    e1, e2 = np.array([0.0, 0.0]), np.array([1.0, 0.0])
    gamma = math.asin(1 / beta)
    checked = 0
    for y in rng.uniform(-1.5, 2.5, size=(2000, 2)):
        ang = angle_at(e1, y, e2)
        if abs(ang - gamma) < 1e-6:
            continue
        assert lens_contains(e1, e2, beta, y) == (ang > gamma)
        checked += 1
    assert checked > 1900


def test_lens_interior_excludes_boundary():
    centres, r = lens_disks([0, 0], [1, 0], 1.0)
    on = centres[0] + [0, r]
    assert lens_contains([0, 0], [1, 0], 1.0, on)
    assert not lens_interior_contains([0, 0], [1, 0], 1.0, on[None, :])[0]


def test_cone_cover_partitions_plane():
    cones = cone_cover(2)
    assert len(cones) == 8
    pts = np.random.default_rng(2).normal(size=(5000, 2))
    counts = np.sum([c.contains(pts) for c in cones], axis=0)
    assert counts.min() >= 1 and counts.max() <= 2
    with pytest.raises(ValueError):
        cone_cover(2, half_angle=0.3)
    with pytest.raises(ValueError):
        cone_cover(2, offset=0.0)
    with pytest.raises(NotImplementedError):
        cone_cover(3)


def test_cone_cover_line():
    cones = cone_cover(1)
    assert cones[0].contains(np.array([[2.0]]))[0] and cones[1].contains(np.array([[-2.0]]))[0]


def test_cone_validation_and_apex():
    with pytest.raises(ValueError):
        Cone(np.zeros(2), np.zeros(2), 0.3)
    with pytest.raises(ValueError):
        Cone(np.zeros(2), np.ones(2), 2.0)
    c = Cone(np.zeros(2), np.array([1.0, 0.0]), 0.3)
    assert c.contains(np.zeros((1, 2)))[0]
    assert c.boundary_directions().shape == (2, 2)


def test_volume_estimate_validation():
    with pytest.raises(ValueError):
        VolumeEstimate(-1, 0, "quadrature", 1)
    with pytest.raises(ValueError):
        VolumeEstimate(1, 0.1, "quadrature", 1)
    with pytest.raises(ValueError):
        VolumeEstimate(1, 0, "guess", 1)
    assert VolumeEstimate(1, 0, "closed_form", 0).to_dict()["method"] == "closed_form"


def test_quadrature_two_disks_against_formula():
    oracle = 4 * math.pi / 3 + math.sqrt(3) / 2
    assert two_disk_union(1, 1) == pytest.approx(oracle)
    est = region_volume_quadrature(disk_union_region([[0, 0], [1, 0]], [1, 1]), rel_tol=1e-4)
    assert abs(est.value - oracle) <= est.bracket
    assert est.value == pytest.approx(oracle, rel=1e-4)


def test_quadrature_without_sdf_hint():
    reg = disk_union_region([[0, 0]], [1])
    plain = Region(reg.membership, reg.bounding_box)
    est = region_volume_quadrature(plain, rel_tol=2e-3)
    assert est.value == pytest.approx(math.pi, rel=2e-3)


def test_quadrature_rejects_other_dimensions():
    with pytest.raises(ValueError):
        region_volume_quadrature(disk_union_region(np.zeros((1, 3)), [1]))


def test_mc_volume_within_three_sigma():
    oracle = 4 * math.pi / 3 + math.sqrt(3) / 2
    est = region_volume_mc(disk_union_region([[0, 0], [1, 0]], [1, 1]), 200_000, Seed(4))
    assert abs(est.value - oracle) < 3 * est.std_error


def test_mc_volume_3d_ball():
    est = region_volume_mc(disk_union_region(np.zeros((1, 3)), [1]), 200_000, Seed(5))
    assert abs(est.value - 4 / 3 * math.pi) < 3 * est.std_error


def test_disk_union_area_cases():
    assert disk_union_area(np.zeros((0, 2)), []) == 0
    assert disk_union_area([[0, 0]], [2]) == pytest.approx(4 * math.pi)
    assert disk_union_area([[0, 0], [5, 0]], [1, 1]) == pytest.approx(2 * math.pi)
    assert disk_union_area([[0, 0], [0.2, 0]], [1, 0.5]) == pytest.approx(math.pi)
    assert disk_union_area([[0, 0], [0, 0]], [1, 1]) == pytest.approx(math.pi)
    # offset below rounding: each disk "contains" the other, still counted once
    assert disk_union_area([[0, 0], [0, 1e-74]], [1, 1]) == pytest.approx(math.pi)


@given(st.floats(0.05, 3), st.floats(0.01, 0.999))
def test_disk_union_area_two_disks_property(r, frac):
    dist = 2 * r * frac
    assert disk_union_area([[0, 0], [dist, 0]], [r, r]) == pytest.approx(two_disk_union(r, dist), rel=1e-9)


@given(st.lists(st.tuples(coord, coord, st.floats(0.1, 2)), min_size=1, max_size=6))
def test_disk_union_area_matches_quadrature(disks):
    c = np.array([[x, y] for x, y, _ in disks])
    r = np.array([rr for _, _, rr in disks])
    exact = disk_union_area(c, r)
    q = region_volume_quadrature(disk_union_region(c, r), rel_tol=1e-3)
    assert q.value - q.bracket - 1e-9 <= exact <= q.value + q.bracket + 1e-9
    assert exact <= np.sum(np.pi * r * r) + 1e-9
    assert exact >= np.max(np.pi * r * r) - 1e-9


def test_far_apart_groups_keep_precision():
    # groups 1e7 apart: a single global boundary integral loses ~1e-4 to cancellation
    far = np.array([-1269872.3647556491, -12317175.666925155])
    c = np.array([[0, 0], far, far + [0.657, -0.756], [-0.0019, 0.0012]])
    r = np.array([1.0, 0.6, 0.6, 0.01])
    comps = disk_components(c, r)
    assert sorted(map(list, comps)) == [[0, 3], [1, 2]]
    local = disk_union_area(c[[0, 3]], r[[0, 3]]) + disk_union_area(c[[1, 2]] - far, r[[1, 2]])
    assert disk_union_area(c, r) == pytest.approx(local, rel=1e-13)
    assert disk_union_area([[0, 0], [1e12, 0]], [1, 1]) == pytest.approx(2 * math.pi, rel=1e-12)
    q = disk_union_quadrature(c, r, rel_tol=1e-4)
    assert abs(q.value - local) <= q.bracket and q.bracket < 1e-2 * local  # one global box gives ~1e6


@given(st.lists(st.tuples(coord, coord, st.floats(0.1, 2)), min_size=1, max_size=6), st.floats(-1e6, 1e6))
def test_disk_union_area_translation_invariant(disks, shift):
    c = np.array([[x, y] for x, y, _ in disks])
    r = np.array([rr for _, _, rr in disks])
    assert disk_union_area(c + shift, r) == pytest.approx(disk_union_area(c, r), rel=1e-6)


def test_unit_ball_samples_inside_and_uniform():
    u = unit_ball_samples(np.random.default_rng(3), 100_000, 3)
    r = np.linalg.norm(u, axis=1)
    assert r.max() <= 1
    # P(|U| < 1/2) = 1/8 in three dimensions
    assert abs((r < 0.5).mean() - 0.125) < 4 * math.sqrt(0.125 * 0.875 / 1e5)


def test_ball_union_volume_against_closed_forms():
    rng = np.random.default_rng(4)
    unit2 = unit_ball_samples(rng, 200_000, 2)
    est = ball_union_volume([[0, 0], [1, 0]], [1, 1], unit2)
    assert abs(est.value - two_disk_union(1, 1)) < 3 * est.std_error
    # far apart and tiny: no collapse, exact without overlap
    far = ball_union_volume([[0, 0, 0], [1e4, 0, 0]], [1e-3, 2e-3], unit_ball_samples(rng, 1000, 3))
    assert far.value == pytest.approx(4 / 3 * math.pi * (1e-9 + 8e-9), rel=1e-12) and far.std_error == 0
    assert ball_union_volume(np.zeros((0, 3)), [], unit2).value == 0
