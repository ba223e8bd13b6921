"""Configuration and staged, resumable orchestration of the full workflow."""

from __future__ import annotations

import copy
import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable

import yaml

from . import io
from .chains import chains_for_truck, pattern_stats
from .identify import (
    DEFAULT_ROAD_WIDTHS,
    STATUSES,
    CircuityCalibration,
    filter_trip_ends,
    identify_trip_ends,
    calibrate_circuity_order,
)
from .ingest import CityBoundary, EmptyTrajectory, ParseReport, clean_trajectory, clip_to_city, group_by_truck, parse_gps_csv
from .loubar import ThresholdLadder, derive_ladder
from .roadnet import LoadReport, PoiIndex, Router, load_graph, load_pois, load_restricted_areas
from .stops import SpeedHistogram, attach_indices, derive_speed_threshold, detect_stops, interval_speeds
from .synth import read_calibration_csv, read_truth_csv, read_validation_csv, score_against_truth
from .zones import hotspot_grid, od_matrix

logger = logging.getLogger(__name__)

STAGES = ("ingest", "stops", "thresholds", "calibrate", "identify", "filter", "trips", "chains", "grid", "odmatrix", "score")
INPUT_KEYS = ("gps", "nodes", "edges", "pois", "boundary", "restricted", "calibration", "truth", "validation")
REQUIRED_INPUTS = ("gps", "nodes", "edges", "pois")


class PipelineError(Exception):
    """A stage failed. ``exit_code`` is 1 for bad input, 2 for a processing failure."""

    def __init__(self, stage: str, cause: str, exit_code: int = 2):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = exit_code


@dataclass
class Params:
    v_max_kmh: float = 120.0
    bin_width_kmh: float = 0.5
    smoothing_bins: int = 3
    speed_search_max_kmh: float = 20.0
    speed_default_kmh: float = 5.0
    max_speed_kmh: float = 150.0
    balance_eps: float = 0.01
    max_levels: int = 10
    ladder_min_population: int = 10
    K: int = 8
    circuity_order: int | None = None
    eta: float = 0.0
    middle_edge: str = "index"
    max_snap_m: float = 2000.0
    utc_offset_s: int = 0
    poi_radius_m: float = 200.0
    road_widths_m: dict = field(default_factory=lambda: dict(DEFAULT_ROAD_WIDTHS))
    dbscan_eps_m: float = 500.0
    dbscan_min_pts: int = 1
    zone_size_m: float = 3000.0
    match_radius_m: float = 300.0
    match_window_s: float = 1800.0

    def validate(self):
        positive = (
            "v_max_kmh", "bin_width_kmh", "smoothing_bins", "speed_search_max_kmh", "speed_default_kmh",
            "max_speed_kmh", "balance_eps", "max_levels", "K", "max_snap_m", "poi_radius_m",
            "dbscan_eps_m", "dbscan_min_pts", "zone_size_m", "match_radius_m", "match_window_s",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"parameter {name} must be positive")
        if self.eta < 0:
            raise ValueError("parameter eta must be non-negative")
        if self.circuity_order is not None and self.circuity_order < 1:
            raise ValueError("parameter circuity_order must be at least 1")
        missing = set(DEFAULT_ROAD_WIDTHS) - set(self.road_widths_m)
        if missing or any(v <= 0 for v in self.road_widths_m.values()):
            raise ValueError("road_widths_m needs a positive width for every road class")


@dataclass
class PipelineConfig:
    inputs: dict[str, str]
    params: Params = field(default_factory=Params)
    out: str = "out"
    threads: int = 1
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict, base_dir: str | Path = ".") -> "PipelineConfig":
        d = dict(d or {})
        base = Path(base_dir)
        unknown = set(d) - {"inputs", "params", "out", "threads", "seed"}
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        inputs = {}
        for k, v in (d.get("inputs") or {}).items():
            if k not in INPUT_KEYS:
                raise ValueError(f"unknown input {k!r}")
            if v is not None:
                inputs[k] = str(base / v)
        pdict = d.get("params") or {}
        known = {f.name for f in fields(Params)}
        bad = set(pdict) - known
        if bad:
            raise ValueError(f"unknown parameters: {sorted(bad)}")
        params = Params(**pdict)
        if "road_widths_m" in pdict:
            params.road_widths_m = {**DEFAULT_ROAD_WIDTHS, **pdict["road_widths_m"]}
        return cls(inputs, params, str(base / d.get("out", "out")), int(d.get("threads", 1)), int(d.get("seed", 0)))

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        with open(path) as f:
            return cls.from_dict(yaml.safe_load(f), Path(path).parent)

    def validate(self, stages=STAGES):
        self.params.validate()
        if self.threads < 1:
            raise ValueError("threads must be at least 1")
        for k in REQUIRED_INPUTS:
            if k not in self.inputs:
                raise ValueError(f"input {k!r} is required")
        if "score" in stages and "truth" not in self.inputs and "validation" not in self.inputs:
            raise ValueError("scoring needs a truth or validation input")
        if self.params.circuity_order is None and "calibration" not in self.inputs:
            raise ValueError("either inputs.calibration or params.circuity_order is required")

    def to_dict(self) -> dict:
        return {"inputs": dict(sorted(self.inputs.items())), "params": asdict(self.params), "threads": self.threads, "seed": self.seed}


def _sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _input_stage(key: str) -> str:
    return {
        "gps": "ingest", "boundary": "ingest", "nodes": "calibrate", "edges": "calibrate",
        "restricted": "calibrate", "calibration": "calibrate", "pois": "filter", "truth": "score", "validation": "score",
    }[key]


class Pipeline:
    """Runs stages in order, reusing intermediates whose cache key is unchanged."""

    def __init__(self, config: PipelineConfig):
        self.cfg = config
        self.p = config.params
        self.out = Path(config.out)
        self.state: dict[str, Any] = {}
        self.summary: dict[str, Any] = {}
        self._keys: dict[str, str] = {}
        self._manifest_path = self.out / "manifest.json"
        self._manifest: dict = {}
        self._input_hashes: dict[str, str] = {}

    # ------------------------------------------------------------ plumbing

    def _path(self, name: str) -> Path:
        return self.out / name

    def _input(self, key: str, stage: str) -> str:
        path = self.cfg.inputs.get(key)
        if path is None:
            raise PipelineError(stage, f"no {key} input configured", 1)
        if not Path(path).exists():
            raise PipelineError(stage, f"{key} file not found: {path}", 1)
        if key not in self._input_hashes:
            self._input_hashes[key] = _sha256(path)
        return path

    def _key(self, stage: str) -> str:
        idx = STAGES.index(stage)
        parts = {
            "stage": stage,
            "params": asdict(self.p),
            "upstream": self._keys.get(STAGES[idx - 1]) if idx else None,
            "inputs": {
                k: self._input_hashes.get(k) or (_sha256(v) if Path(v).exists() else None)
                for k, v in sorted(self.cfg.inputs.items())
                if STAGES.index(_input_stage(k)) <= idx
            },
        }
        return hashlib.sha256(json.dumps(parts, sort_keys=True, default=str).encode()).hexdigest()

    def _cached(self, stage: str, outputs: list[str]) -> dict | None:
        entry = self._manifest.get(stage)
        if not entry or entry.get("key") != self._keys[stage]:
            return None
        for name in outputs:
            path = self._path(name)
            if not path.exists() or _sha256(path) != entry["outputs"].get(name):
                return None
        return entry

    def _record(self, stage: str, outputs: list[str], data: dict | None = None):
        self._manifest[stage] = {
            "key": self._keys[stage],
            "outputs": {name: _sha256(self._path(name)) for name in outputs},
            "data": data or {},
        }
        io.write_json(self._manifest, self._manifest_path)

    def _map(self, fn: Callable, items: list) -> list:
        if self.cfg.threads <= 1 or len(items) < 2:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(self.cfg.threads) as pool:
            return list(pool.map(fn, items))

    # ------------------------------------------------------------ stages

    def stage_ingest(self):
        outputs = ["clean_gps.csv", "segments.csv"]
        self._input("gps", "ingest")
        boundary_path = self.cfg.inputs.get("boundary")
        if boundary_path:
            self._input("boundary", "ingest")
        self._keys["ingest"] = self._key("ingest")
        entry = self._cached("ingest", outputs)
        if entry:
            trajs = io.read_trajectories(self._path("clean_gps.csv"), self._path("segments.csv"))
            self.summary["ingest"] = entry["data"]
        else:
            report = ParseReport()
            try:
                records = parse_gps_csv(self.cfg.inputs["gps"], report)
            except ValueError as exc:
                raise PipelineError("ingest", str(exc), 1) from exc
            boundary = CityBoundary.from_geojson(boundary_path) if boundary_path else None
            trajs, n_empty = [], 0
            for truck, recs in group_by_truck(records).items():
                try:
                    tr = clean_trajectory(recs, self.p.v_max_kmh)
                except EmptyTrajectory:
                    n_empty += 1
                    continue
                trajs.extend(clip_to_city(tr, boundary) if boundary else [tr])
            io.write_gps_csv(trajs, self._path("clean_gps.csv"))
            io.write_segments(trajs, self._path("segments.csv"))
            data = {
                "n_rows": report.n_rows,
                "n_invalid_rows": report.n_invalid,
                "n_trucks": len({t.truck_id for t in trajs}),
                "n_trajectories": len(trajs),
                "n_dropped_trucks": n_empty,
                "n_records_clean": int(sum(len(t) for t in trajs)),
            }
            self._record("ingest", outputs, data)
            self.summary["ingest"] = data
            # continue with exactly what was written so resumed runs see identical values
            trajs = io.read_trajectories(self._path("clean_gps.csv"), self._path("segments.csv"))
        if not trajs:
            raise PipelineError("ingest", "no trajectory survived cleaning", 2)
        self.state["trajectories"] = trajs

    def stage_stops(self):
        outputs = ["stops.csv"]
        self._keys["stops"] = self._key("stops")
        trajs = self.state["trajectories"]
        entry = self._cached("stops", outputs)
        if entry:
            speed = entry["data"]["speed_threshold_kmh"]
            fallback = entry["data"]["speed_threshold_fallback"]
            stops = io.read_stops_csv(self._path("stops.csv"))
        else:
            hist = SpeedHistogram.from_speeds([], self.p.bin_width_kmh, self.p.max_speed_kmh)
            speeds = self._map(interval_speeds, trajs)
            for s in speeds:
                hist = hist.merge(SpeedHistogram.from_speeds(s, self.p.bin_width_kmh, self.p.max_speed_kmh))
            if hist.total <= 0:
                raise PipelineError("stops", "no intervals to build a speed histogram", 2)
            thr = derive_speed_threshold(hist, self.p.smoothing_bins, self.p.speed_search_max_kmh, self.p.speed_default_kmh)
            speed, fallback = thr.value, thr.fallback
            stops = [s for tr, sp in zip(trajs, speeds) for s in detect_stops(tr, speed, sp)]
            io.write_stops_csv(stops, self._path("stops.csv"))
            stops = io.read_stops_csv(self._path("stops.csv"))
            self._record("stops", outputs, {"speed_threshold_kmh": speed, "speed_threshold_fallback": fallback})
        io.write_json({"speed_threshold_kmh": speed, "speed_threshold_fallback": fallback}, self._path("thresholds.json"))
        self.state["speed_threshold"] = speed
        by_traj = []
        for tr in trajs:
            lo, hi = int(tr.timestamp[0]), int(tr.timestamp[-1])
            mine = [replace(s) for s in stops if s.truck_id == tr.truck_id and lo <= s.start_time and s.end_time <= hi]
            by_traj.append(attach_indices(tr, mine))
        self.state["stops"] = by_traj
        self.summary["stops"] = {
            "speed_threshold_kmh": speed,
            "speed_threshold_fallback": fallback,
            "n_stops": sum(len(s) for s in by_traj),
        }

    def stage_thresholds(self):
        self._keys["thresholds"] = self._key("thresholds")
        dwells = [s.dwell for ss in self.state["stops"] for s in ss]
        if not dwells:
            raise PipelineError("thresholds", "no stops detected", 2)
        ladder = derive_ladder(dwells, self.p.max_levels, self.p.balance_eps, self.p.ladder_min_population)
        if not len(ladder):
            raise PipelineError("thresholds", "dwell population is balanced; no threshold levels", 2)
        doc = {"speed_threshold_kmh": self.state["speed_threshold"], "speed_threshold_fallback": self.summary["stops"]["speed_threshold_fallback"]}
        doc.update(ladder.to_dict())
        io.write_json(doc, self._path("thresholds.json"))
        self.state["ladder"] = ladder
        self.summary["thresholds"] = {"time_threshold_ladder_s": ladder.levels, "n_levels": len(ladder)}

    def stage_calibrate(self):
        nodes, edges = self._input("nodes", "roadnet load"), self._input("edges", "roadnet load")
        try:
            graph = load_graph(nodes, edges, LoadReport())
        except (OSError, ValueError, KeyError) as exc:
            raise PipelineError("roadnet load", str(exc), 1) from exc
        areas = load_restricted_areas(self._input("restricted", "calibrate")) if "restricted" in self.cfg.inputs else []
        router = Router(graph, areas, self.p.max_snap_m, self.p.middle_edge, self.p.utc_offset_s)
        self.state["graph"], self.state["router"] = graph, router
        self._keys["calibrate"] = self._key("calibrate")
        if self.p.circuity_order is not None:
            cal = CircuityCalibration(self.p.circuity_order, self.p.K, [])
        else:
            trips = read_calibration_csv(self._input("calibration", "calibrate"))
            try:
                cal = calibrate_circuity_order(trips, router, self.p.K)
            except ValueError as exc:
                raise PipelineError("calibrate", str(exc), 2) from exc
        io.write_json(cal.to_dict(), self._path("calibration.json"))
        self.state["n"] = cal.n
        self.summary["calibrate"] = {"circuity_order": cal.n, "K": cal.K, "n_edges": len(graph.edges), "n_restricted_areas": len(areas)}

    def stage_identify(self):
        outputs = ["ends_raw.geojson"]
        self._keys["identify"] = self._key("identify")
        trajs, stops, ladder = self.state["trajectories"], self.state["stops"], self.state["ladder"]
        router, n = self.state["router"], self.state["n"]
        entry = self._cached("identify", outputs)
        if entry:
            ends = io.read_ends_geojson(self._path("ends_raw.geojson"))
        else:
            per = self._map(lambda k: identify_trip_ends(trajs[k], stops[k], ladder, router, n, self.p.eta), list(range(len(trajs))))
            ends = [e for es in per for e in es]
            io.write_ends_geojson(ends, self._path("ends_raw.geojson"))
            ends = io.read_ends_geojson(self._path("ends_raw.geojson"))
            self._record("identify", outputs)
        self.state["ends_raw"] = ends
        self.summary["identify"] = {"n_ends": len(ends), "by_level": _count(e.level_used for e in ends)}

    def stage_filter(self):
        outputs = ["ends.geojson"]
        self._input("pois", "filter")
        self._keys["filter"] = self._key("filter")
        entry = self._cached("filter", outputs)
        if entry:
            ends = io.read_ends_geojson(self._path("ends.geojson"))
        else:
            pois = PoiIndex(load_pois(self.cfg.inputs["pois"]))
            ends = filter_trip_ends(self.state["ends_raw"], self.state["graph"], pois, self.p.road_widths_m, self.p.poi_radius_m)
            io.write_ends_geojson(ends, self._path("ends.geojson"))
            self._record("filter", outputs)
        self.state["ends"] = ends
        self.summary["filter"] = {s: sum(1 for e in ends if e.status == s) for s in STATUSES}

    def _ends_by_trajectory(self):
        out = []
        for tr in self.state["trajectories"]:
            lo, hi = int(tr.timestamp[0]), int(tr.timestamp[-1])
            mine = [e for e in self.state["ends"] if e.truck_id == tr.truck_id and lo <= e.arrive_time and e.depart_time <= hi]
            out.append(mine)
        return out

    def stage_trips(self):
        self._keys["trips"] = self._key("trips")
        trajs = self.state["trajectories"]
        groups = self._ends_by_trajectory()
        results = self._map(
            lambda k: chains_for_truck(_with_indices(trajs[k], groups[k]), trajs[k], self.p.dbscan_eps_m, self.p.dbscan_min_pts),
            list(range(len(trajs))),
        )
        self.state["truck_chains"] = results
        trips = [t for r in results for t in r.trips]
        self.state["trips"] = trips
        io.write_trips_csv(trips, self._path("trips.csv"))
        self.summary["trips"] = {"n_trips": len(trips)}

    def stage_chains(self):
        self._keys["chains"] = self._key("chains")
        rows, closed = [], []
        for r in self.state["truck_chains"]:
            for i, c in enumerate(r.chains):
                rows.append((r.truck_id, i, c))
                if c.closed:
                    closed.append(c)
        io.write_chains_csv(rows, self._path("chains.csv"))
        stats = pattern_stats(closed) if closed else []
        io.write_patterns_csv(stats, self._path("patterns.csv"))
        self.state["pattern_stats"] = stats
        self.summary["chains"] = {
            "n_closed": len(closed),
            "n_open": len(rows) - len(closed),
            "n_patterns": len(stats),
            "top_patterns": [{"pattern": p, "count": n, "share": round(s, 6)} for p, n, s in stats[:10]],
        }

    def _grid_origin(self):
        b = self.cfg.inputs.get("boundary")
        return CityBoundary.from_geojson(b).centroid if b else None

    def stage_grid(self):
        self._keys["grid"] = self._key("grid")
        grid = hotspot_grid(self.state["ends"], self.p.zone_size_m, self._grid_origin())
        io.write_hotspots_csv(grid, self._path("hotspots.csv"))
        self.summary["grid"] = {"n_cells": len(grid.counts), "n_ends": grid.total}

    def stage_odmatrix(self):
        self._keys["odmatrix"] = self._key("odmatrix")
        grid = od_matrix(self.state["trips"], self.p.zone_size_m, self._grid_origin())
        io.write_od_csv(grid, self._path("od.csv"))
        self.summary["odmatrix"] = {"n_pairs": len(grid.counts), "n_trips": grid.total}

    def stage_score(self):
        self._keys["score"] = self._key("score")
        if "truth" in self.cfg.inputs:
            truth = read_truth_csv(self._input("truth", "score"))
        else:
            truth = read_validation_csv(self._input("validation", "score"))
        try:
            score = score_against_truth(self.state["ends"], truth, self.p.match_radius_m, self.p.match_window_s)
        except ValueError as exc:
            raise PipelineError("score", str(exc), 2) from exc
        result = score.to_dict()
        planned = truth.planned_shares() if truth.patterns else {}
        if planned:
            recovered = {p: s for p, _, s in self.state.get("pattern_stats", [])}
            result["pattern_shares"] = {p: {"planned": round(v, 6), "recovered": round(recovered.get(p, 0.0), 6)} for p, v in planned.items()}
        io.write_json(result, self._path("score.json"))
        self.summary["score"] = result

    # ------------------------------------------------------------ driver

    def run(self, until: str = "odmatrix") -> dict:
        """Run every stage up to and including ``until``; writes ``summary.json``."""
        stages = list(STAGES[: STAGES.index(until) + 1])
        has_truth = "truth" in self.cfg.inputs or "validation" in self.cfg.inputs
        # scoring rides along once kept ends exist
        if until != "score" and has_truth and "filter" in stages:
            stages.append("score")
        if "score" in stages:
            # chains feed the pattern comparison
            for s in ("trips", "chains"):
                if s not in stages:
                    stages.insert(stages.index("score"), s)
        try:
            self.cfg.validate(stages)
        except ValueError as exc:
            raise PipelineError("config", str(exc), 1) from exc
        self.out.mkdir(parents=True, exist_ok=True)
        if self._manifest_path.exists():
            try:
                self._manifest = json.loads(self._manifest_path.read_text())
            except json.JSONDecodeError:
                self._manifest = {}
        for stage in stages:
            logger.info("stage %s", stage)
            try:
                getattr(self, f"stage_{stage}")()
            except PipelineError:
                raise
            except FileNotFoundError as exc:
                raise PipelineError(stage, str(exc), 1) from exc
            except Exception as exc:  # noqa: BLE001 - any stage failure aborts with its name
                raise PipelineError(stage, f"{type(exc).__name__}: {exc}", 2) from exc
        self.summary["config"] = self.cfg.to_dict()
        io.write_json(self.summary, self._path("summary.json"))
        return self.summary


def _count(values) -> dict:
    out: dict = {}
    for v in values:
        out[str(v)] = out.get(str(v), 0) + 1
    return dict(sorted(out.items()))


def _with_indices(traj, ends):
    """Ends read back from GeoJSON carry no fix indices; restore them from timestamps."""
    import numpy as np

    out = []
    for e in ends:
        a = int(np.searchsorted(traj.timestamp, e.arrive_time))
        b = int(np.searchsorted(traj.timestamp, e.depart_time))
        out.append(replace(e, start_index=a, end_index=b))
    return out


def run_pipeline(config: PipelineConfig | dict | str | Path, until: str = "odmatrix") -> dict:
    if isinstance(config, (str, Path)):
        config = PipelineConfig.from_file(config)
    elif isinstance(config, dict):
        config = PipelineConfig.from_dict(copy.deepcopy(config))
    return Pipeline(config).run(until)
