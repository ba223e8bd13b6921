"""
Trip chains and zones
=====================

Kept trip ends cluster into places; the most visited place is the truck's
base, and the visit sequence splits into base-to-base chains.
"""

from truckends import SynthScenario, generate_scenario, pattern_of, pattern_stats, split_chains
from truckends.chains import Trip, chains_for_truck
from truckends.identify import TripEnd
from truckends.zones import hotspot_grid, od_matrix

print(pattern_of(["depot", "a", "b", "a", "depot"]))
for c in split_chains(["B", 1, "B", 1, 2, "B", 3, 1, 3, "B"], "B"):
    print("  chain", c.visits, "->", c.pattern)

# use the planted ends of a synthetic fleet directly
out = generate_scenario(SynthScenario(seed=4, n_trucks=10, days=3))
ends = [
    TripEnd(e.truck_id, e.lon, e.lat, e.arrive, e.depart, 0)
    for e in out.truth.end_events()
]
chains = []
trips: list[Trip] = []
for truck in sorted({e.truck_id for e in ends}):
    tc = chains_for_truck([e for e in ends if e.truck_id == truck])
    chains.extend(tc.chains)
    trips.extend(tc.trips)

for pattern, count, share in pattern_stats(chains)[:5]:
    print(f"  {pattern:<14} {count:4d}  {share:.2f}")
print("planted:", {k: round(v, 2) for k, v in out.truth.planned_shares().items()})

grid = hotspot_grid(ends, cell_m=3000)
top = sorted(grid.counts.items(), key=lambda kv: -kv[1])[:5]
print("busiest 3 km cells:", top)
od = od_matrix(trips, cell_m=3000)
print(len(trips), "trips over", len(od.counts), "zone pairs")
