"""Cheapest way to create one huge score: the influence zone and its minimal area.

A single long edge of length D costs the empty disk of radius D around its
tail. After normalising the score to one, the smallest zone is the unit disk,
area pi. The literal zone of the bare two-point pair also protects the head,
so it is larger; a satellite point next to the head shrinks that second disk.

Run: python3 demos/02_rate_constant.py   (about a minute)
"""
import math

from spatial_ld.graphs import GraphModel
from spatial_ld.influence import ConfigPair, influence_volume
from spatial_ld.optimizer import AnnealParams, optimize_rate, positivity_floor
from spatial_ld.point_process import Seed
from spatial_ld.scores import ScoreVariant

nng, a15 = GraphModel.knn(1, 2), ScoreVariant("dir", 15.0)

bare = ConfigPair([0], [[0, 0], [1, 0]], nng, a15)
print(f"bare pair, literal zone:   {influence_volume(bare).volume.value:.5f}"
      f"  (two unit disks at distance 1: {4 * math.pi / 3 + math.sqrt(3) / 2:.5f})")
print(f"bare pair, reduced zone:   {influence_volume(bare, 'nng_balls').volume.value:.5f}  (pi = {math.pi:.5f})")
for eps in (0.1, 0.01, 0.001):
    sat = ConfigPair([0], [[0, 0], [1, 0], [1 + eps, 0]], nng, a15)
    print(f"satellite at distance {eps:g}: literal zone {influence_volume(sat).volume.value:.5f}")

print(f"positivity floor: {positivity_floor(nng):.3e}")
for objective in ("nng_reduced", "literal"):
    res = optimize_rate(nng, a15, objective, AnnealParams(restarts=4, steps_per_restart=3000, seed=Seed(2)))
    print(f"annealing, {objective:11s}: best area {res.best_volume:.5f} with {len(res.best.pair.psi)} points")

# forbidding a single dominant score forces the unit score to be shared, which costs more area
con = optimize_rate(nng, a15, "nng_reduced", AnnealParams(restarts=4, steps_per_restart=3000, seed=Seed(3)),
                    constraint=(1, 0.2))
print(f"top score capped at 0.8: best area {con.best_volume:.5f} "
      f"(two mutual neighbours sharing the score: {2 ** (-2 / 15) * (4 * math.pi / 3 + math.sqrt(3) / 2):.5f})")
