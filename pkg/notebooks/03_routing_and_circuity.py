"""
Alternative routes and circuity
===============================

A trip is "circuitous" when the truck drove further than the n-th shortest
road route between its ends. n is calibrated from trips known to be single
deliveries by maximising mean length similarity.
"""

import numpy as np

from truckends import Router, calibrate_circuity_order, k_shortest_paths, shortest_path, ssi
from truckends.roadnet import restricted_edges
from truckends.synth import SynthScenario, _grid_graph, _restricted_core

# a jittered 13x13 grid whose central square is closed to trucks all day
sc = SynthScenario(seed=5, grid_nx=13, grid_ny=13, restricted_core=0.4, node_jitter_m=80)
g, xy = _grid_graph(sc)
areas, _ = _restricted_core(sc, xy)
banned = restricted_edges(g, areas, 12 * 3600)
print(len(g.nodes), "nodes,", len(g.edges), "edges,", len(banned), "closed at noon")

west, east = 6 * 13 + 0, 6 * 13 + 12   # middle row, both sides
for p in k_shortest_paths(g, west, east, K=5):
    print(f"  {p.length:8.0f} m over {len(p.edges)} edges")
print("legal route around the core:", round(shortest_path(g, west, east, banned).length), "m")

# single-delivery trips that drove around the core, with a little length noise
rng = np.random.default_rng(5)
trips = []
for _ in range(60):
    row = int(rng.integers(5, 8))
    o, d = row * 13, row * 13 + 12
    actual = shortest_path(g, o, d, banned).length * (1 + rng.normal(0, 0.01))
    trips.append((g.nodes[o], g.nodes[d], actual))

cal = calibrate_circuity_order(trips, Router(g), K=8)
for k, m in enumerate(cal.mean_ssi, 1):
    print(f"  n={k}  mean SSI {m:.3f}")
print("calibrated order n =", cal.n)
print("SSI(10 km, 12 km) =", round(ssi(10_000, 12_000), 4))
