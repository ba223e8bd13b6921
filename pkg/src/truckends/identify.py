"""Recursive trip-end identification, circuity calibration and end filtering."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .ingest import Trajectory, haversine
from .loubar import ThresholdLadder
from .roadnet import PoiIndex, Poi, RoadGraph, Router, distance_to_nearest_road
from .stops import Stop

logger = logging.getLogger(__name__)

KEPT = "kept"
REMOVED_ON_ROAD = "removed_on_road"
REMOVED_NO_POI = "removed_no_poi"
STATUSES = (KEPT, REMOVED_ON_ROAD, REMOVED_NO_POI)

DEFAULT_ROAD_WIDTHS = {"motorway": 30.0, "primary": 20.0, "secondary": 14.0, "tertiary": 10.0}
THAKUR_LEVELS_S = (1800.0, 900.0, 300.0)
THAKUR_RATIO = 0.7


@dataclass(frozen=True)
class TripEnd:
    truck_id: str
    lon: float
    lat: float
    arrive_time: int
    depart_time: int
    level_used: int
    status: str = KEPT
    start_index: int = -1
    end_index: int = -1

    @property
    def dwell(self) -> int:
        return self.depart_time - self.arrive_time

    @property
    def kept(self) -> bool:
        return self.status == KEPT

    @classmethod
    def from_stop(cls, stop: Stop, level: int) -> "TripEnd":
        return cls(
            stop.truck_id,
            stop.lon,
            stop.lat,
            stop.start_time,
            stop.end_time,
            level,
            KEPT,
            stop.start_index,
            stop.end_index,
        )


@dataclass
class Subtrajectory:
    """Fixes ``start`` .. ``end`` (inclusive) between two ends or trajectory boundaries."""

    traj: Trajectory
    start: int
    end: int
    origin: tuple[float, float]
    destination: tuple[float, float]

    @property
    def truck_id(self) -> str:
        return self.traj.truck_id

    @property
    def actual_length(self) -> float:
        return self.traj.path_length(self.start, self.end)

    @property
    def straight_length(self) -> float:
        return haversine(self.origin, self.destination)

    @property
    def start_time(self) -> int:
        return int(self.traj.timestamp[self.start])


@dataclass
class CircuityCalibration:
    n: int
    K: int
    mean_ssi: list[float]
    n_trips: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"circuity_order": self.n, "K": self.K, "mean_ssi": self.mean_ssi, "n_trips": self.n_trips}


class CalibrationError(ValueError):
    pass


def ssi(a: float, b: float) -> float:
    """Scalar Sørensen similarity of two lengths: 2 min(a, b) / (a + b)."""
    if a + b <= 0:
        return 1.0
    return 2.0 * min(a, b) / (a + b)


def _as_router(graph) -> Router:
    return graph if isinstance(graph, Router) else Router(graph)


def calibrate_circuity_order(single_trips: Sequence, graph, K: int = 8) -> CircuityCalibration:
    """Choose the path order whose lengths best match observed single trips.

    ``single_trips`` holds ``(origin_lonlat, dest_lonlat, actual_length_m)``.
    Orders not generated for a trip are left out of that order's mean. Ties
    go to the smaller order.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    if not single_trips:
        raise CalibrationError("no calibration trips")
    router = _as_router(graph)
    scores: list[list[float]] = [[] for _ in range(K)]
    for origin, dest, actual in single_trips:
        s, d = router.snap(*origin), router.snap(*dest)
        if s is None or d is None:
            continue
        for k, p in enumerate(router.k_paths(s, d, K)):
            scores[k].append(ssi(actual, p.length))
    if not scores[0]:
        raise CalibrationError("no calibration trip has reachable endpoints")
    means = [float(np.mean(v)) if v else float("nan") for v in scores]
    best = 0
    for k in range(1, K):
        if scores[k] and means[k] > means[best]:
            best = k
    return CircuityCalibration(best + 1, K, means, [len(v) for v in scores])


def is_circuitous(sub: Subtrajectory, graph, n: int, eta: float = 0.0) -> bool:
    """True when the subtrajectory is longer than ``(1 + eta)`` times the n-th path."""
    router = _as_router(graph)
    ref = router.nth_path_length(sub.origin, sub.destination, n, sub.start_time)
    if ref is None:
        return False
    return sub.actual_length > (1.0 + eta) * ref


def circuity_ratio(sub: Subtrajectory) -> float:
    actual = sub.actual_length
    if actual <= 0:
        return 1.0
    return sub.straight_length / actual


def _split_recursive(
    traj: Trajectory,
    stops: Sequence[Stop],
    levels: Sequence[float],
    entry: int,
    circuitous: Callable[[Subtrajectory], bool],
    skip_empty_levels: bool,
) -> list[TripEnd]:
    found: dict[int, int] = {}
    boundary_first = (float(traj.lon[0]), float(traj.lat[0]))
    boundary_last = (float(traj.lon[-1]), float(traj.lat[-1]))
    last = len(traj) - 1
    lowest = levels[-1]

    def piece(o: int | None, d: int | None) -> Subtrajectory:
        a = 0 if o is None else stops[o].end_index
        b = last if d is None else stops[d].start_index
        return Subtrajectory(
            traj,
            a,
            b,
            boundary_first if o is None else (stops[o].lon, stops[o].lat),
            boundary_last if d is None else (stops[d].lon, stops[d].lat),
        )

    def process(o: int | None, d: int | None, inner: list[int], level: int):
        for i in range(level, len(levels)):
            new = [k for k in inner if stops[k].dwell >= levels[i]]
            if new:
                for k in new:
                    found[k] = i
                bounds = [o] + new + [d]
                for a, b in zip(bounds, bounds[1:]):
                    lo = -1 if a is None else a
                    hi = len(stops) if b is None else b
                    rest = [k for k in inner if lo < k < hi]
                    # a piece without any stop long enough for the lowest level cannot gain ends
                    if i + 1 < len(levels) and any(stops[k].dwell >= lowest for k in rest):
                        if circuitous(piece(a, b)):
                            process(a, b, rest, i + 1)
                return
            if not skip_empty_levels:
                return

    process(None, None, list(range(len(stops))), entry)
    return [TripEnd.from_stop(stops[k], found[k]) for k in sorted(found)]


def entry_level(levels: Sequence[float], max_dwell: float) -> int | None:
    """Index of the largest level not above ``max_dwell``."""
    for i, v in enumerate(levels):
        if v <= max_dwell:
            return i
    return None


def identify_trip_ends(
    traj: Trajectory,
    stops: Sequence[Stop],
    ladder: ThresholdLadder | Sequence[float],
    graph: RoadGraph | Router,
    n: int,
    eta: float = 0.0,
) -> list[TripEnd]:
    """Data-driven multilevel identification of one truck's trip ends.

    The entry level is the largest ladder threshold not above the truck's
    longest dwell. Stops at or above it split the trajectory; each split piece
    whose travelled length exceeds the n-th shortest road path between its
    ends is searched again at lower levels, skipping levels that add nothing.
    """
    levels = list(ladder)
    if not stops or not levels:
        return []
    stops = sorted(stops, key=lambda s: s.start_time)
    entry = entry_level(levels, max(s.dwell for s in stops))
    if entry is None:
        return []
    router = _as_router(graph)
    return _split_recursive(
        traj, stops, levels, entry, lambda sub: is_circuitous(sub, router, n, eta), skip_empty_levels=True
    )


def thakur_baseline(
    traj: Trajectory,
    stops: Sequence[Stop],
    levels: Sequence[float] = THAKUR_LEVELS_S,
    ratio_threshold: float = THAKUR_RATIO,
) -> list[TripEnd]:
    """Fixed-ladder baseline with a straight-line circuity ratio test.

    Every trajectory starts at the top level. A piece is searched at the next
    level only when its straight/travelled ratio is below ``ratio_threshold``,
    and a level that finds no end in a piece ends that branch.
    """
    if not stops:
        return []
    stops = sorted(stops, key=lambda s: s.start_time)
    return _split_recursive(
        traj,
        stops,
        list(levels),
        0,
        lambda sub: circuity_ratio(sub) < ratio_threshold,
        skip_empty_levels=False,
    )


def filter_trip_ends(
    ends: Sequence[TripEnd],
    graph: RoadGraph,
    pois: PoiIndex | Sequence[Poi],
    widths: Mapping[str, float] = DEFAULT_ROAD_WIDTHS,
    poi_radius: float = 200.0,
) -> list[TripEnd]:
    """Mark ends lying on a road or with no freight POI nearby as removed."""
    missing = {"motorway", "primary", "secondary", "tertiary"} - set(widths)
    if missing:
        raise ValueError(f"road widths missing for {sorted(missing)}")
    index = pois if isinstance(pois, PoiIndex) else PoiIndex(pois)
    out = []
    for e in ends:
        if not e.kept:
            out.append(e)
            continue
        dist, cls = distance_to_nearest_road(graph, e.lon, e.lat)
        if dist < widths[cls] / 2.0:
            out.append(replace(e, status=REMOVED_ON_ROAD))
        elif not index.within(e.lon, e.lat, poi_radius):
            out.append(replace(e, status=REMOVED_NO_POI))
        else:
            out.append(e)
    return out


def accuracy(NA: float, NM: float, NE: float) -> float:
    """Share of accurately identified ends among all judged ends."""
    total = NA + NM + NE
    if total <= 0:
        raise ValueError("accuracy undefined when all counts are zero")
    return NA / total
