"""
Stops from raw fixes
====================

A truck parked with its engine on still drifts a few metres between fixes.
The stop speed is read off the fleet's speed histogram rather than assumed.
"""

import numpy as np

from truckends import SynthScenario, generate_scenario
from truckends.stops import SpeedHistogram, derive_speed_threshold, detect_stops, interval_speeds

# a small synthetic fleet: 5 trucks over 2 days on a 9x9 grid
out = generate_scenario(SynthScenario(seed=1, n_trucks=5, days=2, grid_nx=9, grid_ny=9, n_clients=20))
speeds = np.concatenate([interval_speeds(t) for t in out.trajectories])
print(len(speeds), "intervals, median", round(float(np.median(speeds)), 1), "km/h")

hist = SpeedHistogram.from_speeds(speeds, bin_width=0.5)

# drift sits in the first few bins, driving far above; the valley between them is the threshold
for lo, hi in [(0, 2), (2, 5), (5, 10), (10, 30), (30, 150)]:
    share = ((speeds >= lo) & (speeds < hi)).mean()
    print(f"{lo:>4}-{hi:<4} km/h  {share:6.1%}")

v = derive_speed_threshold(hist)
print("stop speed threshold:", v.value, "km/h", "(fallback)" if v.fallback else "")

traj = out.trajectories[0]
stops = detect_stops(traj, v.value)
print(traj.truck_id, "has", len(stops), "stops")
for s in stops[:8]:
    print(f"  {s.start_time:>7d}  {s.dwell / 60:6.1f} min  ({s.n_points} fixes)")
