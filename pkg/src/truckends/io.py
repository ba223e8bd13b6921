"""Readers and writers for the pipeline's CSV / GeoJSON interchange files."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .chains import TripChain, Trip
from .identify import STATUSES, TripEnd
from .ingest import Trajectory, group_by_truck, parse_gps_csv
from .stops import Stop
from .synth import write_gps_csv
from .zones import ZoneGrid

__all__ = [
    "write_gps_csv",
    "read_trajectories",
    "write_segments",
    "write_stops_csv",
    "read_stops_csv",
    "write_ends_geojson",
    "read_ends_geojson",
    "write_trips_csv",
    "write_chains_csv",
    "write_patterns_csv",
    "write_hotspots_csv",
    "write_od_csv",
    "write_json",
]


def write_json(obj, path: str | Path) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def write_segments(trajectories: Sequence[Trajectory], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["truck_id", "start_time", "end_time", "n_records"])
        for tr in trajectories:
            w.writerow([tr.truck_id, int(tr.timestamp[0]), int(tr.timestamp[-1]), len(tr)])


def read_trajectories(gps_path: str | Path, segments_path: str | Path | None = None) -> list[Trajectory]:
    """Load cleaned fixes; ``segments.csv`` (when given) restores clipped pieces."""
    groups = group_by_truck(parse_gps_csv(gps_path))
    trajs = {k: Trajectory.from_records(v) for k, v in groups.items() if len(v) >= 2}
    if segments_path is None or not Path(segments_path).exists():
        return list(trajs.values())
    out = []
    with open(segments_path, newline="") as f:
        for row in csv.DictReader(f):
            tr = trajs[row["truck_id"]]
            a = int(np.searchsorted(tr.timestamp, int(row["start_time"])))
            b = int(np.searchsorted(tr.timestamp, int(row["end_time"]), side="right"))
            out.append(tr.slice(a, b))
    return out


def write_stops_csv(stops: Iterable[Stop], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["truck_id", "lon", "lat", "start_time", "end_time", "dwell_s", "n_points"])
        for s in stops:
            w.writerow([s.truck_id, f"{s.lon:.7f}", f"{s.lat:.7f}", s.start_time, s.end_time, s.dwell, s.n_points])


def read_stops_csv(path: str | Path) -> list[Stop]:
    out = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            out.append(
                Stop(row["truck_id"], float(row["lon"]), float(row["lat"]), int(row["start_time"]), int(row["end_time"]), int(row["n_points"]))
            )
    return out


def write_ends_geojson(ends: Iterable[TripEnd], path: str | Path) -> None:
    feats = []
    for e in ends:
        feats.append(
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [round(e.lon, 7), round(e.lat, 7)]},
                "properties": {
                    "truck_id": e.truck_id,
                    "arrive_time": e.arrive_time,
                    "depart_time": e.depart_time,
                    "dwell_s": e.dwell,
                    "level_used": e.level_used,
                    "status": e.status,
                },
            }
        )
    with open(path, "w") as f:
        json.dump({"type": "FeatureCollection", "features": feats}, f, indent=1)
        f.write("\n")


def read_ends_geojson(path: str | Path) -> list[TripEnd]:
    with open(path) as f:
        doc = json.load(f)
    out = []
    for ft in doc["features"]:
        p = ft["properties"]
        if p["status"] not in STATUSES:
            raise ValueError(f"unknown trip-end status {p['status']!r}")
        lon, lat = ft["geometry"]["coordinates"]
        out.append(TripEnd(str(p["truck_id"]), float(lon), float(lat), int(p["arrive_time"]), int(p["depart_time"]), int(p["level_used"]), p["status"]))
    return out


def write_trips_csv(trips: Iterable[Trip], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["truck_id", "o_lon", "o_lat", "d_lon", "d_lat", "depart", "arrive", "straight_m", "path_m"])
        for t in trips:
            w.writerow(
                [
                    t.truck_id,
                    f"{t.origin.lon:.7f}",
                    f"{t.origin.lat:.7f}",
                    f"{t.destination.lon:.7f}",
                    f"{t.destination.lat:.7f}",
                    t.depart,
                    t.arrive,
                    f"{t.straight_m:.1f}",
                    "" if t.path_m != t.path_m else f"{t.path_m:.1f}",
                ]
            )


def write_chains_csv(chains: Iterable[tuple[str, int, TripChain]], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["truck_id", "chain_idx", "pattern", "closed"])
        for truck, idx, c in chains:
            w.writerow([truck, idx, c.pattern or "", int(c.closed)])


def write_patterns_csv(stats: Iterable[tuple[str, int, float]], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["pattern", "count", "share"])
        for p, n, s in stats:
            w.writerow([p, n, f"{s:.6f}"])


def write_hotspots_csv(grid: ZoneGrid, path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["ix", "iy", "center_lon", "center_lat", "count"])
        for cell in sorted(grid.counts):
            lon, lat = grid.cell_center(cell)
            w.writerow([cell[0], cell[1], f"{lon:.6f}", f"{lat:.6f}", grid.counts[cell]])


def write_od_csv(grid: ZoneGrid, path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["o_ix", "o_iy", "d_ix", "d_iy", "trips"])
        for (o, d) in sorted(grid.counts):
            w.writerow([o[0], o[1], d[0], d[1], grid.counts[(o, d)]])
