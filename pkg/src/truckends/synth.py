"""Seeded synthetic fleets with labelled ground truth, and scoring against it.

A scenario is a square road grid around a city centre. Each truck owns a base
site and a pool of client sites, all set back from the road so that dwelling
there is distinguishable from stopping on the carriageway. Trucks run planned
base-to-base chains every day, pause at intersections along the way
(temporary stops), and park at the base overnight. Fixes are sampled at a
fixed interval and jittered by a Gaussian position error.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from .ingest import Trajectory, haversine, project_local, unproject_local
from .roadnet import POI_CATEGORIES, Edge, Poi, RestrictedArea, RoadGraph, shortest_path

T0 = 1526601600  # 2018-05-18 00:00 UTC
END_LABELS = ("base", "client", "end")


class InfeasiblePlan(ValueError):
    pass


@dataclass
class SynthScenario:
    seed: int = 0
    # road grid
    grid_nx: int = 15
    grid_ny: int = 15
    edge_m: float = 1000.0
    node_jitter_m: float = 0.0  # uniform offset of each intersection; breaks path-length ties
    center_lon: float = 116.40
    center_lat: float = 39.90
    # sites and fleet
    n_clients: int = 60
    clients_per_truck: int = 8
    site_offset_m: float = 100.0
    poi_coverage: float = 0.97
    n_trucks: int = 50
    days: int = 7
    pattern_mix: dict = field(default_factory=lambda: {"B-1-B": 0.60, "B-1-2-B": 0.25, "B-1-2-1-B": 0.15})
    # time budget, minutes / hours
    client_dwell_min: tuple = (20.0, 90.0)
    base_dwell_min: tuple = (40.0, 120.0)
    day_start_h: tuple = (6.0, 8.0)
    day_end_h: float = 19.0
    speed_kmh: tuple = (35.0, 55.0)
    spur_speed_kmh: float = 25.0
    congestion_prob: float = 0.2  # per road segment
    congestion_kmh: tuple = (8.0, 25.0)
    # noise and temporary stops
    sample_s: int = 30
    noise_sigma_m: float = 3.0
    drift_burst_prob: float = 0.001
    drift_burst_sigma_m: float = 15.0
    temp_stops_per_trip: float = 0.5
    temp_dwell_min: tuple = (1.0, 5.0)
    # routing
    detour_prob: float = 0.0
    restricted_core: float = 0.0  # side of a central restricted square as a fraction of the grid extent
    restricted_windows: tuple = ("00:00-24:00",)
    n_calibration_trips: int = 200

    def __post_init__(self):
        for name in ("client_dwell_min", "base_dwell_min", "day_start_h", "speed_kmh", "congestion_kmh", "temp_dwell_min", "restricted_windows"):
            setattr(self, name, tuple(getattr(self, name)))
        if self.grid_nx < 2 or self.grid_ny < 2 or self.edge_m <= 0:
            raise ValueError("grid needs at least 2x2 nodes and a positive edge length")
        if not 0 <= self.node_jitter_m < self.edge_m / 2:
            raise ValueError("node jitter must be in [0, edge_m / 2)")
        if min(self.client_dwell_min + self.base_dwell_min + self.temp_dwell_min) <= 0:
            raise ValueError("dwell distributions must be positive")
        if self.n_trucks < 1 or self.days < 1 or self.sample_s <= 0:
            raise ValueError("fleet size, days and sampling interval must be positive")
        total = sum(self.pattern_mix.values())
        if total <= 0:
            raise ValueError("pattern mix must have positive weight")
        self.pattern_mix = {k: v / total for k, v in self.pattern_mix.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "SynthScenario":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path: str | Path) -> "SynthScenario":
        with open(path) as f:
            return cls.from_dict(yaml.safe_load(f) or {})

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d


@dataclass(frozen=True)
class TruthEvent:
    truck_id: str
    lon: float
    lat: float
    arrive: int
    depart: int
    label: str


@dataclass
class GroundTruth:
    events: list[TruthEvent]
    patterns: dict[str, list[str]] = field(default_factory=dict)

    def end_events(self) -> list[TruthEvent]:
        return [e for e in self.events if e.label in END_LABELS]

    def planned_shares(self) -> dict[str, float]:
        counts: dict[str, int] = {}
        for ps in self.patterns.values():
            for p in ps:
                counts[p] = counts.get(p, 0) + 1
        total = sum(counts.values())
        return {k: v / total for k, v in sorted(counts.items())}


@dataclass
class Site:
    node: int
    x: float
    y: float
    has_poi: bool


@dataclass
class SynthOutput:
    scenario: SynthScenario
    trajectories: list[Trajectory]
    graph: RoadGraph
    pois: list[Poi]
    truth: GroundTruth
    calibration: list[tuple[tuple[float, float], tuple[float, float], float]]
    boundary: dict
    restricted: list[RestrictedArea]
    restricted_geojson: dict | None

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        """Write every artefact in its interchange format; returns the paths."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "gps": out / "gps.csv",
            "nodes": out / "nodes.csv",
            "edges": out / "edges.csv",
            "pois": out / "pois.geojson",
            "truth": out / "truth.csv",
            "validation": out / "validation.csv",
            "calibration": out / "calibration.csv",
            "boundary": out / "boundary.geojson",
            "scenario": out / "scenario.yaml",
        }
        from .roadnet import write_graph, write_pois

        write_gps_csv(self.trajectories, paths["gps"])
        write_graph(self.graph, paths["nodes"], paths["edges"])
        write_pois(self.pois, paths["pois"])
        write_truth_csv(self.truth, paths["truth"])
        write_validation_csv(self.truth, paths["validation"])
        write_calibration_csv(self.calibration, paths["calibration"])
        with open(paths["boundary"], "w") as f:
            json.dump(self.boundary, f, indent=1)
        if self.restricted_geojson is not None:
            paths["restricted"] = out / "restricted.geojson"
            with open(paths["restricted"], "w") as f:
                json.dump(self.restricted_geojson, f, indent=1)
        with open(paths["scenario"], "w") as f:
            yaml.safe_dump(self.scenario.to_dict(), f, sort_keys=True)
        return paths


# ---------------------------------------------------------------- road grid


def _grid_graph(sc: SynthScenario) -> tuple[RoadGraph, np.ndarray]:
    """Bidirectional grid; returns the graph and node (x, y) in local meters."""
    nx, ny = sc.grid_nx, sc.grid_ny
    xs = (np.arange(nx) - (nx - 1) / 2) * sc.edge_m
    ys = (np.arange(ny) - (ny - 1) / 2) * sc.edge_m
    xy = np.array([(xs[i], ys[j]) for j in range(ny) for i in range(nx)])
    if sc.node_jitter_m > 0:
        # separate stream so jitter leaves the fleet draws untouched
        xy = xy + np.random.default_rng([sc.seed, 1]).uniform(-sc.node_jitter_m, sc.node_jitter_m, xy.shape)
    lon, lat = unproject_local(xy[:, 0], xy[:, 1], sc.center_lon, sc.center_lat)
    nodes = {k: (round(float(lon[k]), 7), round(float(lat[k]), 7)) for k in range(len(xy))}

    def line_class(idx: int, n: int) -> str:
        if idx in (0, n - 1):
            return "motorway"
        if idx % 5 == 0:
            return "primary"
        if idx % 2 == 0:
            return "secondary"
        return "tertiary"

    edges = []
    eid = 0
    for j in range(ny):
        for i in range(nx):
            k = j * nx + i
            nbrs = []
            if i + 1 < nx:
                nbrs.append((k + 1, line_class(j, ny)))
            if j + 1 < ny:
                nbrs.append((k + nx, line_class(i, nx)))
            for m, cls in nbrs:
                length = round(haversine(nodes[k], nodes[m]), 3)
                edges.append(Edge(eid, k, m, length, cls))
                edges.append(Edge(eid + 1, m, k, length, cls))
                eid += 2
    return RoadGraph(nodes, edges), xy


def _restricted_core(sc: SynthScenario, xy: np.ndarray) -> tuple[list[RestrictedArea], dict | None]:
    if sc.restricted_core <= 0:
        return [], None
    half_x = (xy[:, 0].max() - xy[:, 0].min()) * sc.restricted_core / 2
    half_y = (xy[:, 1].max() - xy[:, 1].min()) * sc.restricted_core / 2
    corners = [(-half_x, -half_y), (half_x, -half_y), (half_x, half_y), (-half_x, half_y), (-half_x, -half_y)]
    lon, lat = unproject_local([c[0] for c in corners], [c[1] for c in corners], sc.center_lon, sc.center_lat)
    ring = [[round(float(a), 7), round(float(b), 7)] for a, b in zip(lon, lat)]
    feat = {
        "type": "Feature",
        "geometry": {"type": "Polygon", "coordinates": [ring]},
        "properties": {"label": "core", "active_windows": list(sc.restricted_windows)},
    }
    doc = {"type": "FeatureCollection", "features": [feat]}
    return [RestrictedArea.from_feature(feat)], doc


def _boundary(sc: SynthScenario, xy: np.ndarray) -> dict:
    m = sc.edge_m
    x0, x1 = xy[:, 0].min() - m, xy[:, 0].max() + m
    y0, y1 = xy[:, 1].min() - m, xy[:, 1].max() + m
    xs, ys = [x0, x1, x1, x0, x0], [y0, y0, y1, y1, y0]
    lon, lat = unproject_local(xs, ys, sc.center_lon, sc.center_lat)
    ring = [[round(float(a), 7), round(float(b), 7)] for a, b in zip(lon, lat)]
    return {
        "type": "FeatureCollection",
        "features": [{"type": "Feature", "geometry": {"type": "Polygon", "coordinates": [ring]}, "properties": {"name": "synthetic city"}}],
    }


# ---------------------------------------------------------------- motion


class _Motion:
    """Piecewise-linear position knots (t, x, y) plus labelled stationary events."""

    def __init__(self, t: float, x: float, y: float):
        self.t = [t]
        self.x = [x]
        self.y = [y]
        self.events: list[tuple[float, float, float, float, str]] = []

    @property
    def now(self) -> float:
        return self.t[-1]

    def dwell(self, until: float, label: str):
        x, y = self.x[-1], self.y[-1]
        start = self.now
        if until > start:
            self.t.append(until)
            self.x.append(x)
            self.y.append(y)
        self.events.append((x, y, start, max(until, start), label))

    def drive(self, pts: Sequence[tuple[float, float]], speed_ms: float):
        for px, py in pts:
            d = math.hypot(px - self.x[-1], py - self.y[-1])
            if d <= 0:
                continue
            self.t.append(self.now + d / speed_ms)
            self.x.append(px)
            self.y.append(py)


def _route_nodes(g: RoadGraph, a: int, b: int, banned=frozenset()) -> list[int] | None:
    p = shortest_path(g, a, b, banned)
    return None if p is None else p.nodes


def generate_scenario(sc: SynthScenario) -> SynthOutput:
    """Build the road grid, sites, fleet trajectories and ground truth for ``sc``."""
    rng = np.random.default_rng(sc.seed)
    g, xy = _grid_graph(sc)
    areas, restricted_doc = _restricted_core(sc, xy)
    from .roadnet import restricted_edges

    def banned_at(ts: float) -> frozenset[int]:
        return restricted_edges(g, areas, ts % 86400) if areas else frozenset()

    banned_cache: dict[int, frozenset[int]] = {}

    def banned_for(ts: float) -> frozenset[int]:
        key = int(ts % 86400) // 60
        if key not in banned_cache:
            banned_cache[key] = banned_at(key * 60)
        return banned_cache[key]

    # candidate site nodes: not on the outer motorway ring, outside any restricted core
    interior = [
        k for k in range(len(xy))
        if 0 < k % sc.grid_nx < sc.grid_nx - 1 and 0 < k // sc.grid_nx < sc.grid_ny - 1
    ]
    if areas:
        lon, lat = unproject_local(xy[interior, 0], xy[interior, 1], sc.center_lon, sc.center_lat)
        inside = np.zeros(len(interior), bool)
        for a in areas:
            inside |= a.contains(lon, lat)
            # keep sites off the core's edge roads too
            inside |= a.contains(lon + 1e-3, lat) | a.contains(lon - 1e-3, lat) | a.contains(lon, lat + 1e-3) | a.contains(lon, lat - 1e-3)
        interior = [k for k, bad in zip(interior, inside) if not bad]
    n_sites = sc.n_trucks + sc.n_clients
    if n_sites > len(interior):
        raise InfeasiblePlan(f"{n_sites} sites requested but the grid has only {len(interior)} usable nodes")
    site_nodes = rng.choice(interior, size=n_sites, replace=False)
    off = sc.site_offset_m
    sites = [
        Site(int(k), float(xy[k, 0] + off), float(xy[k, 1] + off), bool(rng.random() < sc.poi_coverage))
        for k in site_nodes
    ]
    bases, clients = sites[: sc.n_trucks], sites[sc.n_trucks :]

    pois = []
    for i, s in enumerate(sites):
        if not s.has_poi:
            continue
        px, py = s.x + rng.normal(0, 15), s.y + rng.normal(0, 15)
        plon, plat = unproject_local(px, py, sc.center_lon, sc.center_lat)
        cat = POI_CATEGORIES[int(rng.integers(len(POI_CATEGORIES)))]
        pois.append(Poi(f"site{i:03d}", round(float(plon), 7), round(float(plat), 7), cat))

    patterns = list(sc.pattern_mix)
    probs = np.array([sc.pattern_mix[p] for p in patterns])
    horizon = T0 + sc.days * 86400

    trajectories, events, planned, calib = [], [], {}, []
    for ti in range(sc.n_trucks):
        truck = f"T{ti:03d}"
        base = bases[ti]
        pool_idx = rng.choice(len(clients), size=min(sc.clients_per_truck, len(clients)), replace=False)
        pool = [clients[int(i)] for i in pool_idx]
        mot = _Motion(float(T0), base.x, base.y)
        legs = []  # (depart, arrive) times of single trips for calibration
        planned[truck] = []
        cur = base
        for day in range(sc.days):
            day0 = T0 + day * 86400
            start = day0 + rng.uniform(*sc.day_start_h) * 3600
            mot.dwell(start, "base")
            end_of_day = day0 + sc.day_end_h * 3600
            while True:
                pattern = patterns[int(rng.choice(len(patterns), p=probs))]
                tokens = pattern.split("-")[1:-1]
                n_distinct = len(set(tokens))
                chosen = rng.choice(len(pool), size=n_distinct, replace=False)
                label_site = {str(k + 1): pool[int(c)] for k, c in enumerate(chosen)}
                planned[truck].append(pattern)
                for tok in tokens + ["B"]:
                    dest = base if tok == "B" else label_site[tok]
                    depart = mot.now
                    _drive(mot, g, xy, cur, dest, sc, rng, banned_for(mot.now))
                    legs.append((depart, mot.now))
                    cur = dest
                    if tok != "B":
                        mot.dwell(mot.now + rng.uniform(*sc.client_dwell_min) * 60, "client")
                next_start = mot.now + rng.uniform(*sc.base_dwell_min) * 60
                if next_start >= end_of_day or next_start >= day0 + 86400:
                    break
                mot.dwell(next_start, "base")
        mot.dwell(max(horizon, mot.now + 600), "base")

        traj, truth = _sample(truck, mot, sc, rng)
        trajectories.append(traj)
        events.extend(truth)
        for dep, arr in legs:
            i0 = int(np.searchsorted(traj.timestamp, dep, side="right")) - 1
            i1 = int(np.searchsorted(traj.timestamp, arr, side="left"))
            if 0 <= i0 < i1 < len(traj):
                calib.append(
                    (
                        (float(traj.lon[i0]), float(traj.lat[i0])),
                        (float(traj.lon[i1]), float(traj.lat[i1])),
                        traj.path_length(i0, i1),
                    )
                )

    if len(calib) > sc.n_calibration_trips:
        pick = np.sort(rng.choice(len(calib), size=sc.n_calibration_trips, replace=False))
        calib = [calib[int(i)] for i in pick]
    return SynthOutput(
        sc,
        trajectories,
        g,
        pois,
        GroundTruth(events, planned),
        calib,
        _boundary(sc, xy),
        areas,
        restricted_doc,
    )


def _drive(mot: _Motion, g: RoadGraph, xy: np.ndarray, a: Site, b: Site, sc: SynthScenario, rng, banned) -> None:
    route = _route_nodes(g, a.node, b.node, banned)
    if route is None:
        raise InfeasiblePlan(f"site at node {b.node} unreachable from node {a.node}")
    if sc.detour_prob > 0 and len(route) > 1 and rng.random() < sc.detour_prob:
        via = int(rng.integers(len(xy)))
        r1 = _route_nodes(g, a.node, via, banned)
        r2 = _route_nodes(g, via, b.node, banned)
        if r1 is not None and r2 is not None:
            route = r1 + r2[1:]
    speed = rng.uniform(*sc.speed_kmh) / 3.6
    spur = sc.spur_speed_kmh / 3.6
    mot.drive([tuple(xy[a.node])], spur)
    interior = route[1:-1]
    n_temp = int(rng.poisson(sc.temp_stops_per_trip)) if interior else 0
    temp_at = set(rng.choice(len(interior), size=min(n_temp, len(interior)), replace=False).tolist()) if n_temp else set()
    for i, node in enumerate(route[1:], start=0):
        v = speed
        if sc.congestion_prob > 0 and rng.random() < sc.congestion_prob:
            v = rng.uniform(*sc.congestion_kmh) / 3.6
        mot.drive([tuple(xy[node])], v)
        if i in temp_at and node != route[-1]:
            mot.dwell(mot.now + rng.uniform(*sc.temp_dwell_min) * 60, "temp")
    mot.drive([(b.x, b.y)], spur)


def _sample(truck: str, mot: _Motion, sc: SynthScenario, rng) -> tuple[Trajectory, list[TruthEvent]]:
    kt = np.asarray(mot.t)
    kx = np.asarray(mot.x)
    ky = np.asarray(mot.y)
    ts = np.arange(T0, int(kt[-1]) + 1, sc.sample_s, dtype=np.int64)
    x = np.interp(ts, kt, kx)
    y = np.interp(ts, kt, ky)
    # instantaneous speed/heading from the knot segment each fix falls in
    seg = np.clip(np.searchsorted(kt, ts, side="right") - 1, 0, len(kt) - 2)
    dt = np.maximum(kt[seg + 1] - kt[seg], 1e-9)
    vx = (kx[seg + 1] - kx[seg]) / dt
    vy = (ky[seg + 1] - ky[seg]) / dt
    speed = np.round(np.hypot(vx, vy) * 3.6, 1)
    heading = np.round(np.degrees(np.arctan2(vx, vy)) % 360, 0)
    n = len(ts)
    x = x + rng.normal(0, sc.noise_sigma_m, n)
    y = y + rng.normal(0, sc.noise_sigma_m, n)
    if sc.drift_burst_prob > 0:
        burst = rng.random(n) < sc.drift_burst_prob
        x[burst] += rng.normal(0, sc.drift_burst_sigma_m, burst.sum())
        y[burst] += rng.normal(0, sc.drift_burst_sigma_m, burst.sum())
    lon, lat = unproject_local(x, y, sc.center_lon, sc.center_lat)
    traj = Trajectory(truck, ts, np.round(lon, 7), np.round(lat, 7), speed, heading)
    truth = []
    for ex, ey, a, b, label in mot.events:
        if b - a <= 0:
            continue
        elon, elat = unproject_local(ex, ey, sc.center_lon, sc.center_lat)
        truth.append(TruthEvent(truck, round(float(elon), 7), round(float(elat), 7), int(round(a)), int(round(b)), label))
    return traj, truth


# ---------------------------------------------------------------- file formats


def write_gps_csv(trajectories: Sequence[Trajectory], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        f.write("truck_id,timestamp,lon,lat,speed,heading\n")
        for tr in trajectories:
            buf = io.StringIO()
            for t, x, y, s, h in zip(tr.timestamp.tolist(), tr.lon.tolist(), tr.lat.tolist(), tr.speed.tolist(), tr.heading.tolist()):
                sp = "" if s != s else f"{s:.1f}"
                hd = "" if h != h else f"{h:.0f}"
                buf.write(f"{tr.truck_id},{t},{x:.7f},{y:.7f},{sp},{hd}\n")
            f.write(buf.getvalue())


def write_truth_csv(truth: GroundTruth, path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["truck_id", "lon", "lat", "arrive", "depart", "label"])
        for e in truth.events:
            w.writerow([e.truck_id, f"{e.lon:.7f}", f"{e.lat:.7f}", e.arrive, e.depart, e.label])
    with open(Path(path).with_name(Path(path).stem + "_patterns.json"), "w") as f:
        json.dump(truth.patterns, f, indent=1, sort_keys=True)


def read_truth_csv(path: str | Path) -> GroundTruth:
    events = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            events.append(
                TruthEvent(row["truck_id"], float(row["lon"]), float(row["lat"]), int(row["arrive"]), int(row["depart"]), row["label"])
            )
    patterns = {}
    side = Path(path).with_name(Path(path).stem + "_patterns.json")
    if side.exists():
        with open(side) as f:
            patterns = json.load(f)
    return GroundTruth(events, patterns)


def write_validation_csv(truth: GroundTruth, path: str | Path) -> None:
    """Labelled points ``truck_id,lon,lat,time,label``; base and client visits become ``end``."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["truck_id", "lon", "lat", "time", "label"])
        for e in truth.events:
            label = "end" if e.label in END_LABELS else "temp"
            w.writerow([e.truck_id, f"{e.lon:.7f}", f"{e.lat:.7f}", e.arrive, label])


def read_validation_csv(path: str | Path) -> GroundTruth:
    """Labelled points as zero-length truth events."""
    events = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            if row["label"] not in ("end", "temp"):
                raise ValueError(f"validation label must be end or temp, got {row['label']!r}")
            t = int(row["time"])
            events.append(TruthEvent(row["truck_id"], float(row["lon"]), float(row["lat"]), t, t, row["label"]))
    return GroundTruth(events)


def write_calibration_csv(trips, path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["o_lon", "o_lat", "d_lon", "d_lat", "actual_m"])
        for (olon, olat), (dlon, dlat), m in trips:
            w.writerow([f"{olon:.7f}", f"{olat:.7f}", f"{dlon:.7f}", f"{dlat:.7f}", f"{m:.3f}"])


def read_calibration_csv(path: str | Path) -> list:
    out = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            out.append(((float(row["o_lon"]), float(row["o_lat"])), (float(row["d_lon"]), float(row["d_lat"])), float(row["actual_m"])))
    return out


# ---------------------------------------------------------------- scoring


@dataclass
class Score:
    NA: int
    NM: int
    NE: int

    @property
    def precision(self) -> float:
        return self.NA / (self.NA + self.NM) if self.NA + self.NM else 0.0

    @property
    def recall(self) -> float:
        return self.NA / (self.NA + self.NE) if self.NA + self.NE else 0.0

    @property
    def accuracy(self) -> float:
        from .identify import accuracy

        return accuracy(self.NA, self.NM, self.NE)

    def to_dict(self) -> dict:
        return {
            "NA": self.NA,
            "NM": self.NM,
            "NE": self.NE,
            "precision": self.precision,
            "recall": self.recall,
            "accuracy": self.accuracy,
        }


def _time_gap(a0: int, a1: int, b0: int, b1: int) -> int:
    """Seconds between two intervals, 0 when they overlap."""
    return max(0, max(a0, b0) - min(a1, b1))


def score_against_truth(ends, truth: GroundTruth, match_radius: float = 300.0, match_window: float = 1800.0) -> Score:
    """Greedy time-ordered one-to-one matching of kept ends to base/client events.

    A kept end matches the closest unmatched event of the same truck within
    ``match_radius`` meters whose interval lies within ``match_window``
    seconds of the end's interval. Unmatched kept ends count as NM; truth
    events left unmatched by kept ends count as NE.
    """
    if match_radius <= 0 or match_window <= 0:
        raise ValueError("match radius and window must be positive")
    targets = truth.end_events()
    if not targets:
        raise ValueError("ground truth has no trip-end events")
    by_truck: dict[str, list[TruthEvent]] = {}
    for ev in targets:
        by_truck.setdefault(ev.truck_id, []).append(ev)
    used: set[TruthEvent] = set()
    NA = NM = 0
    for e in sorted((e for e in ends if e.kept), key=lambda e: (e.truck_id, e.arrive_time)):
        best, best_key = None, None
        for ev in by_truck.get(e.truck_id, ()):
            if ev in used:
                continue
            gap = _time_gap(e.arrive_time, e.depart_time, ev.arrive, ev.depart)
            if gap > match_window:
                continue
            d = haversine((e.lon, e.lat), (ev.lon, ev.lat))
            if d > match_radius:
                continue
            key = (gap, d)
            if best_key is None or key < best_key:
                best, best_key = ev, key
        if best is None:
            NM += 1
        else:
            used.add(best)
            NA += 1
    return Score(NA, NM, len(targets) - len(used))
