"""Sample a Poisson window, build both graph families and look at the edge scores.

Run: python3 demos/01_graphs_and_scores.py
"""
import numpy as np

from spatial_ld.geometry import cube
from spatial_ld.graphs import GraphModel, build_adjacency
from spatial_ld.point_process import Seed, sample_poisson
from spatial_ld.scores import ScoreVariant, estimate_mu, functional_Hn, nng_mu_closed_form, node_scores

seed = Seed(1)
pc = sample_poisson(cube(12, 2), 1.0, seed)
print(f"{len(pc)} points in a 12 x 12 window (expected 144)")

for model in (GraphModel.knn(1, 2), GraphModel.knn(3, 2), GraphModel.beta_skeleton(1.2)):
    adj = build_adjacency(pc, model)
    # the indexed builder must agree with the quadratic reference
    assert adj.same_as(build_adjacency(pc, model, "brute"))
    s = {t: node_scores(adj, ScoreVariant(t, 3.0)) for t in ("dir", "undir", "bidir")}
    gap = np.abs(s["dir"] - s["undir"] - s["bidir"]).max()
    H = functional_Hn(adj, cube(12, 2), 12.0, ScoreVariant("dir", 3.0))
    name = f"{model.k}-NN" if model.kind == "knn" else f"beta={model.beta:g} skeleton"
    print(f"{name:18s}: {len(adj.edge_set())} arcs, "
          f"H_n={H:.4f}, largest score {s['dir'].max():.3f}, dir-undir-bidir gap {gap:.1e}")

# the mean nearest-neighbour score of a typical point has a closed form
for alpha in (3.0, 15.0):
    mean, se = estimate_mu(GraphModel.knn(1, 2), ScoreVariant("dir", alpha), replicas=4000, seed=seed.child("mu"))
    print(f"alpha={alpha:g}: Monte Carlo {mean:.4f} +- {se:.4f}, closed form {nng_mu_closed_form(2, alpha):.4f}")
