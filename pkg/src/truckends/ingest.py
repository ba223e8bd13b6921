"""GPS ingestion: CSV parsing, cleaning, city clipping and geodesic helpers."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np
import shapely
from shapely.geometry import MultiPolygon, Polygon

logger = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_000.0
GPS_COLUMNS = ("truck_id", "timestamp", "lon", "lat", "speed", "heading")


class GpsRecord(NamedTuple):
    truck_id: str
    timestamp: int
    lon: float
    lat: float
    speed: float | None = None
    heading: float | None = None


class EmptyTrajectory(ValueError):
    """Raised when fewer than two records survive cleaning."""


@dataclass
class Trajectory:
    """Time-ordered fixes of one truck, stored column-wise."""

    truck_id: str
    timestamp: np.ndarray
    lon: np.ndarray
    lat: np.ndarray
    speed: np.ndarray = field(default=None)  # type: ignore[assignment]
    heading: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.timestamp = np.asarray(self.timestamp, dtype=np.int64)
        self.lon = np.asarray(self.lon, dtype=float)
        self.lat = np.asarray(self.lat, dtype=float)
        n = len(self.timestamp)
        self.speed = np.full(n, np.nan) if self.speed is None else np.asarray(self.speed, dtype=float)
        self.heading = np.full(n, np.nan) if self.heading is None else np.asarray(self.heading, dtype=float)
        if not (len(self.lon) == len(self.lat) == len(self.speed) == len(self.heading) == n):
            raise ValueError("trajectory columns differ in length")
        if n < 2:
            raise EmptyTrajectory(f"trajectory {self.truck_id!r} has {n} record(s)")
        if np.any(np.diff(self.timestamp) <= 0):
            raise ValueError(f"trajectory {self.truck_id!r} timestamps not strictly increasing")

    def __len__(self) -> int:
        return len(self.timestamp)

    @classmethod
    def from_records(cls, records: Sequence[GpsRecord]) -> "Trajectory":
        ids = {r.truck_id for r in records}
        if len(ids) > 1:
            raise ValueError(f"records mix truck ids: {sorted(ids)}")
        return cls(
            truck_id=records[0].truck_id if records else "",
            timestamp=[r.timestamp for r in records],
            lon=[r.lon for r in records],
            lat=[r.lat for r in records],
            speed=[np.nan if r.speed is None else r.speed for r in records],
            heading=[np.nan if r.heading is None else r.heading for r in records],
        )

    @property
    def records(self) -> list[GpsRecord]:
        return [
            GpsRecord(
                self.truck_id,
                int(t),
                float(x),
                float(y),
                None if np.isnan(s) else float(s),
                None if np.isnan(h) else float(h),
            )
            for t, x, y, s, h in zip(self.timestamp, self.lon, self.lat, self.speed, self.heading)
        ]

    def slice(self, start: int, stop: int) -> "Trajectory":
        """Records ``start`` .. ``stop - 1`` as a new trajectory."""
        return Trajectory(
            self.truck_id,
            self.timestamp[start:stop],
            self.lon[start:stop],
            self.lat[start:stop],
            self.speed[start:stop],
            self.heading[start:stop],
        )

    def path_length(self, start: int = 0, stop: int | None = None) -> float:
        """Cumulative haversine length over fixes ``start`` .. ``stop`` inclusive."""
        stop = len(self) - 1 if stop is None else stop
        if stop <= start:
            return 0.0
        lon = self.lon[start : stop + 1]
        lat = self.lat[start : stop + 1]
        return float(haversine_array(lon[:-1], lat[:-1], lon[1:], lat[1:]).sum())


@dataclass
class CityBoundary:
    """Polygons as lists of rings: ``[[exterior, hole, ...], ...]`` in lon/lat."""

    polygons: list[list[list[tuple[float, float]]]]
    name: str = ""

    def __post_init__(self):
        for poly in self.polygons:
            for ring in poly:
                if len(ring) < 4:
                    raise ValueError("boundary ring needs at least 4 points")
                if tuple(ring[0]) != tuple(ring[-1]):
                    raise ValueError("boundary ring is not closed")
        self._geom = MultiPolygon([Polygon(p[0], p[1:]) for p in self.polygons])
        shapely.prepare(self._geom)

    def contains(self, lon: np.ndarray, lat: np.ndarray) -> np.ndarray:
        """Strict interior test per point; points on the boundary are outside."""
        return shapely.contains_xy(self._geom, np.asarray(lon, float), np.asarray(lat, float))

    @property
    def centroid(self) -> tuple[float, float]:
        c = self._geom.centroid
        return c.x, c.y

    @classmethod
    def from_geojson(cls, path: str | Path) -> "CityBoundary":
        with open(path) as f:
            doc = json.load(f)
        geoms = []
        name = ""
        if doc.get("type") == "FeatureCollection":
            for feat in doc["features"]:
                geoms.append(feat["geometry"])
                name = name or (feat.get("properties") or {}).get("name", "")
        elif doc.get("type") == "Feature":
            geoms.append(doc["geometry"])
            name = (doc.get("properties") or {}).get("name", "")
        else:
            geoms.append(doc)
        polygons = []
        for g in geoms:
            if g["type"] == "Polygon":
                polygons.append([[tuple(p) for p in ring] for ring in g["coordinates"]])
            elif g["type"] == "MultiPolygon":
                for poly in g["coordinates"]:
                    polygons.append([[tuple(p) for p in ring] for ring in poly])
            else:
                raise ValueError(f"unsupported boundary geometry {g['type']!r}")
        return cls(polygons, name=name)


def haversine(p1: tuple[float, float], p2: tuple[float, float]) -> float:
    """Great-circle distance in meters between two (lon, lat) points."""
    lon1, lat1 = map(math.radians, p1)
    lon2, lat2 = map(math.radians, p2)
    a = math.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(a)))


def haversine_array(lon1, lat1, lon2, lat2) -> np.ndarray:
    lon1, lat1, lon2, lat2 = (np.radians(np.asarray(v, dtype=float)) for v in (lon1, lat1, lon2, lat2))
    a = np.sin((lat2 - lat1) / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(a)))


def project_local(lon, lat, lon0: float, lat0: float) -> tuple[np.ndarray, np.ndarray]:
    """Equirectangular projection to meters about (lon0, lat0)."""
    k = math.radians(1.0) * EARTH_RADIUS_M
    x = (np.asarray(lon, float) - lon0) * k * math.cos(math.radians(lat0))
    y = (np.asarray(lat, float) - lat0) * k
    return x, y


def unproject_local(x, y, lon0: float, lat0: float) -> tuple[np.ndarray, np.ndarray]:
    k = math.radians(1.0) * EARTH_RADIUS_M
    lon = lon0 + np.asarray(x, float) / (k * math.cos(math.radians(lat0)))
    lat = lat0 + np.asarray(y, float) / k
    return lon, lat


@dataclass
class ParseReport:
    n_rows: int = 0
    n_invalid: int = 0
    reasons: dict = field(default_factory=dict)

    def reject(self, reason: str):
        self.n_invalid += 1
        self.reasons[reason] = self.reasons.get(reason, 0) + 1


def _parse_row(row: list[str]) -> GpsRecord:
    if len(row) != len(GPS_COLUMNS):
        raise ValueError("column count")
    truck_id, ts, lon, lat, speed, heading = (c.strip() for c in row)
    if not truck_id:
        raise ValueError("missing truck_id")
    rec = GpsRecord(
        truck_id,
        int(ts),
        float(lon),
        float(lat),
        float(speed) if speed else None,
        float(heading) if heading else None,
    )
    if rec.timestamp <= 0:
        raise ValueError("timestamp")
    if not -180.0 <= rec.lon <= 180.0:
        raise ValueError("lon out of range")
    if not -90.0 <= rec.lat <= 90.0:
        raise ValueError("lat out of range")
    return rec


def iter_gps_csv(path: str | Path, report: ParseReport | None = None) -> Iterator[GpsRecord]:
    report = ParseReport() if report is None else report
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != GPS_COLUMNS:
            raise ValueError(f"{path}: header must be {','.join(GPS_COLUMNS)}, got {header}")
        for row in reader:
            if not row:
                continue
            report.n_rows += 1
            try:
                yield _parse_row(row)
            except ValueError as exc:
                report.reject(str(exc).split(":")[0])


def parse_gps_csv(path: str | Path, report: ParseReport | None = None) -> list[GpsRecord]:
    """Read a GPS CSV; malformed rows are skipped and tallied in ``report``.

    Raises FileNotFoundError for a missing file and ValueError for a bad header.
    """
    report = ParseReport() if report is None else report
    records = list(iter_gps_csv(path, report))
    if report.n_invalid:
        logger.warning("%s: skipped %d invalid row(s) %s", path, report.n_invalid, report.reasons)
    return records


def group_by_truck(records: Iterable[GpsRecord]) -> dict[str, list[GpsRecord]]:
    out: dict[str, list[GpsRecord]] = {}
    for r in records:
        out.setdefault(r.truck_id, []).append(r)
    return dict(sorted(out.items()))


def clean_trajectory(records: Sequence[GpsRecord], v_max_kmh: float = 120.0) -> Trajectory:
    """Sort, collapse same-timestamp duplicates and drop implied-speed outliers.

    A fix is dropped when the implied speed to both of its neighbours exceeds
    ``v_max_kmh`` (end fixes: to their single neighbour). Passes repeat until
    no such fix remains; a lone fast hop between two plausible fixes (a data
    gap) is kept. Raises EmptyTrajectory if fewer than 2 fixes survive.
    """
    ids = {r.truck_id for r in records}
    if len(ids) > 1:
        raise ValueError(f"records mix truck ids: {sorted(ids)}")
    seen: dict[int, GpsRecord] = {}
    for r in sorted(records, key=lambda r: r.timestamp):
        seen.setdefault(r.timestamp, r)
    recs = list(seen.values())
    if len(recs) < 2:
        raise EmptyTrajectory(f"{len(recs)} record(s) after de-duplication")

    t = np.array([r.timestamp for r in recs], dtype=float)
    lon = np.array([r.lon for r in recs])
    lat = np.array([r.lat for r in recs])
    keep = np.arange(len(recs))
    v_max = v_max_kmh / 3.6
    while len(keep) > 2:
        d = haversine_array(lon[keep[:-1]], lat[keep[:-1]], lon[keep[1:]], lat[keep[1:]])
        fast = d / np.diff(t[keep]) > v_max
        # a fix is the culprit when every adjacent hop touching it is too fast
        bad = np.r_[True, fast] & np.r_[fast, True]
        if not bad.any():
            break
        keep = keep[~bad]
    if len(keep) < 2:
        raise EmptyTrajectory("fewer than 2 records survive outlier removal")
    kept = [recs[i] for i in keep]
    return Trajectory.from_records(kept)


def clip_to_city(traj: Trajectory, boundary: CityBoundary, min_records: int = 2) -> list[Trajectory]:
    """Split ``traj`` into maximal runs of fixes strictly inside ``boundary``."""
    inside = boundary.contains(traj.lon, traj.lat)
    out = []
    for start, stop in _runs(inside):
        if stop - start >= min_records:
            out.append(traj.slice(start, stop))
    return out


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Half-open index ranges of consecutive True values."""
    m = np.r_[False, np.asarray(mask, bool), False].astype(np.int8)
    edges = np.flatnonzero(np.diff(m))
    return list(zip(edges[::2].tolist(), edges[1::2].tolist()))
