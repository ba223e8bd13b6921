"""
A dwell-time ladder
===================

Dwell times are heavy tailed. Repeatedly taking the Loubar cut of the
Lorenz curve and dropping everything above it gives a descending set of
thresholds, one per "scale" of stop.
"""

import numpy as np

from truckends import derive_ladder, lorenz, loubar_fstar

rng = np.random.default_rng(0)
n = 10_000
body = rng.lognormal(np.log(300), 1.0, n)       # short stops, minutes
tail = 3000 * (rng.pareto(1.1, n) + 1)          # long stays, hours to days
dwells = np.where(rng.random(n) < 0.8, body, tail)
dwells = np.maximum(30, np.round(dwells / 30) * 30)

curve = lorenz(dwells)
print("F* of the whole population:", round(loubar_fstar(curve), 4))

ladder = derive_ladder(dwells)
for p in ladder.provenance:
    print(f"{p.threshold / 60:9.1f} min   F*={p.fstar:.3f}   population {p.population}")

# every dwell equal: the Lorenz curve is the diagonal and there is nothing to split
print("equal dwells ->", derive_ladder(np.full(500, 600.0)).levels)
