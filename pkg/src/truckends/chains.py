"""Trips, per-truck travel networks, base-anchored trip chains and their patterns."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np
from sklearn.cluster import DBSCAN

from .identify import TripEnd
from .ingest import EARTH_RADIUS_M, Trajectory, haversine


@dataclass(frozen=True)
class Trip:
    truck_id: str
    origin: TripEnd
    destination: TripEnd
    straight_m: float
    path_m: float

    @property
    def depart(self) -> int:
        return self.origin.depart_time

    @property
    def arrive(self) -> int:
        return self.destination.arrive_time


@dataclass
class TravelNetwork:
    nodes: dict[int, dict]
    edges: dict[tuple[int, int], int]
    base: int
    visits: list[int]


@dataclass
class TripChain:
    visits: list
    closed: bool

    @property
    def pattern(self) -> str | None:
        return pattern_of(self.visits) if self.closed else None


def extract_trips(ends: Sequence[TripEnd], traj: Trajectory | None = None) -> list[Trip]:
    """One trip per pair of consecutive kept ends.

    ``path_m`` is the travelled length between the two stops when the
    trajectory is supplied, otherwise NaN.
    """
    kept = sorted((e for e in ends if e.kept), key=lambda e: e.arrive_time)
    trips = []
    for o, d in zip(kept, kept[1:]):
        if traj is not None and o.end_index >= 0 and d.start_index >= 0:
            path = traj.path_length(o.end_index, d.start_index)
        else:
            path = math.nan
        trips.append(Trip(o.truck_id, o, d, haversine((o.lon, o.lat), (d.lon, d.lat)), path))
    return trips


def dbscan_cluster(ends: Sequence[TripEnd] | np.ndarray, eps: float = 500.0, min_pts: int = 1) -> np.ndarray:
    """DBSCAN labels under great-circle distance; ``-1`` marks noise.

    ``ends`` may be TripEnds or an ``(n, 2)`` array of lon/lat.
    """
    if eps <= 0 or min_pts < 1:
        raise ValueError("eps must be positive and min_pts at least 1")
    if len(ends) == 0:
        return np.zeros(0, dtype=int)
    if isinstance(ends, np.ndarray):
        ll = ends
    else:
        ll = np.array([(e.lon, e.lat) for e in ends])
    X = np.radians(ll[:, ::-1])
    db = DBSCAN(eps=eps / EARTH_RADIUS_M, min_samples=min_pts, metric="haversine", algorithm="ball_tree")
    return db.fit_predict(X)


def build_travel_network(trips: Sequence[Trip], labels: dict[TripEnd, int] | Sequence[int], ends: Sequence[TripEnd] | None = None) -> TravelNetwork:
    """Directed network of clustered ends; the base is the most visited node.

    ``labels`` maps each end to its cluster, either as a dict or aligned with
    ``ends``. Visit ties are broken by total dwell, then by smaller id.
    """
    if not trips:
        raise ValueError("cannot build a travel network without trips")
    if not isinstance(labels, dict):
        if ends is None:
            raise ValueError("ends required when labels is a sequence")
        labels = {e: int(c) for e, c in zip(ends, labels)}
    edges: Counter = Counter()
    visits_count: Counter = Counter()
    for t in trips:
        a, b = labels[t.origin], labels[t.destination]
        edges[(a, b)] += 1
        visits_count[a] += 1
        visits_count[b] += 1
    members: dict[int, list[TripEnd]] = {}
    for e, c in labels.items():
        members.setdefault(c, []).append(e)
    nodes = {}
    for c, ms in sorted(members.items()):
        nodes[c] = {
            "lon": float(np.mean([m.lon for m in ms])),
            "lat": float(np.mean([m.lat for m in ms])),
            "members": sorted(ms, key=lambda m: m.arrive_time),
            "dwell": sum(m.dwell for m in ms),
        }
    base = min(visits_count, key=lambda c: (-visits_count[c], -nodes[c]["dwell"], c))
    seq = sorted({e for t in trips for e in (t.origin, t.destination)}, key=lambda e: e.arrive_time)
    return TravelNetwork(nodes, dict(edges), base, [labels[e] for e in seq])


def split_chains(visits: Sequence[Hashable], base: Hashable) -> list[TripChain]:
    """Cut a visit sequence at each base occurrence.

    Base-to-base segments with at least one interior visit are closed chains;
    the stretches before the first and after the last base are returned as
    open segments.
    """
    visits = list(visits)
    pos = [i for i, v in enumerate(visits) if v == base]
    if not pos:
        return [TripChain(visits, False)] if visits else []
    out = []
    if pos[0] > 0:
        out.append(TripChain(visits[: pos[0] + 1], False))
    for a, b in zip(pos, pos[1:]):
        if b - a >= 2:
            out.append(TripChain(visits[a : b + 1], True))
    if pos[-1] < len(visits) - 1:
        out.append(TripChain(visits[pos[-1] :], False))
    return out


def pattern_of(visits: Sequence[Hashable]) -> str:
    """Canonical code of a closed chain, e.g. ``B-1-2-1-B``."""
    visits = list(visits)
    if len(visits) < 3 or visits[0] != visits[-1]:
        raise ValueError("a closed chain starts and ends at the base with at least one stop between")
    base = visits[0]
    labels: dict = {}
    tokens = ["B"]
    for v in visits[1:-1]:
        if v == base:
            raise ValueError("base inside a chain")
        if v not in labels:
            labels[v] = len(labels) + 1
        tokens.append(str(labels[v]))
    tokens.append("B")
    return "-".join(tokens)


def pattern_stats(chains: Sequence[TripChain | str]) -> list[tuple[str, int, float]]:
    """``(pattern, count, share)`` over closed chains, most frequent first."""
    counts = Counter()
    for c in chains:
        if isinstance(c, str):
            counts[c] += 1
        elif c.closed:
            counts[c.pattern] += 1
    total = sum(counts.values())
    if total == 0:
        raise ValueError("no closed chains")
    return [(p, n, n / total) for p, n in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))]


@dataclass
class TruckChains:
    truck_id: str
    trips: list[Trip]
    network: TravelNetwork | None
    chains: list[TripChain] = field(default_factory=list)


def chains_for_truck(ends: Sequence[TripEnd], traj: Trajectory | None = None, eps: float = 500.0, min_pts: int = 1) -> TruckChains:
    """Trips, travel network and chains for one truck's ends."""
    kept = sorted((e for e in ends if e.kept), key=lambda e: e.arrive_time)
    truck = kept[0].truck_id if kept else (ends[0].truck_id if ends else "")
    trips = extract_trips(kept, traj)
    if not trips:
        return TruckChains(truck, trips, None, [])
    labels = dbscan_cluster(kept, eps, min_pts)
    # noise points become their own singleton nodes
    next_id = int(labels.max()) + 1 if len(labels) else 0
    lab = {}
    for e, c in zip(kept, labels):
        if c < 0:
            c = next_id
            next_id += 1
        lab[e] = int(c)
    net = build_travel_network(trips, lab)
    return TruckChains(truck, trips, net, split_chains(net.visits, net.base))
