"""
Trip ends, end to end
=====================

Generate a scenario with short client visits, run the pipeline, and compare
the data-driven ladder against a fixed 30/15/5 minute ladder.
"""

import tempfile
from pathlib import Path

from truckends import SynthScenario, generate_scenario, score_against_truth
from truckends.identify import THAKUR_LEVELS_S, filter_trip_ends, thakur_baseline
from truckends.pipeline import Pipeline, PipelineConfig
from truckends.roadnet import PoiIndex, load_pois

tmp = Path(tempfile.mkdtemp())
out = generate_scenario(SynthScenario(seed=3, n_trucks=12, days=3, client_dwell_min=(6.0, 10.0)))
paths = out.write(tmp / "data")

cfg = PipelineConfig.from_dict({
    "inputs": {k: str(paths[k]) for k in ("gps", "nodes", "edges", "pois", "boundary", "calibration", "truth")},
    "out": str(tmp / "run"),
})
pipe = Pipeline(cfg)
summary = pipe.run("odmatrix")
print("speed threshold:", summary["stops"]["speed_threshold_kmh"], "km/h")
print("ladder (min):", [round(v / 60, 1) for v in summary["thresholds"]["time_threshold_ladder_s"]])
print("circuity order:", summary["calibrate"]["circuity_order"])
print("precision / recall:", round(summary["score"]["precision"], 3), "/", round(summary["score"]["recall"], 3))

st = pipe.state
fixed = []
for tr, stops in zip(st["trajectories"], st["stops"]):
    fixed.extend(thakur_baseline(tr, stops, THAKUR_LEVELS_S, 0.7))
fixed = filter_trip_ends(fixed, st["graph"], PoiIndex(load_pois(paths["pois"])))
base = score_against_truth(fixed, out.truth, 300.0, 1800.0)
print("fixed ladder precision / recall:", round(base.precision, 3), "/", round(base.recall, 3))
print("outputs in", cfg.out)
