"""Road network: loading, time-of-day restrictions, routing and spatial queries."""

from __future__ import annotations

import csv
import heapq
import json
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
import shapely
from scipy.spatial import cKDTree
from shapely.geometry import MultiPolygon, Polygon

from .ingest import EARTH_RADIUS_M, haversine, haversine_array, project_local

logger = logging.getLogger(__name__)

ROAD_CLASSES = ("motorway", "primary", "secondary", "tertiary")
POI_CATEGORIES = (
    "building_company",
    "mechanical_electronics",
    "chemical_metallurgy",
    "commercial_trade",
    "logistics_warehouse",
    "mining_company",
    "factory",
    "agricultural_base",
    "industrial_park",
    "building_material_market",
)
INDEX_CELL_M = 500.0


class Edge(NamedTuple):
    id: int
    source: int
    target: int
    length: float
    road_class: str


@dataclass
class Path:
    nodes: list[int]
    edges: list[int]
    length: float


@dataclass
class LoadReport:
    n_rejected: int = 0
    reasons: dict = field(default_factory=dict)

    def reject(self, reason: str):
        self.n_rejected += 1
        self.reasons[reason] = self.reasons.get(reason, 0) + 1


class RoadGraph:
    """Directed road graph; edge weight is length in meters."""

    def __init__(self, nodes: dict[int, tuple[float, float]], edges: Iterable[Edge]):
        self.nodes = dict(nodes)
        self.edges: dict[int, Edge] = {}
        for e in edges:
            if e.source not in self.nodes or e.target not in self.nodes:
                raise ValueError(f"edge {e.id} references an unknown node")
            if e.length <= 0:
                raise ValueError(f"edge {e.id} has non-positive length")
            if e.road_class not in ROAD_CLASSES:
                raise ValueError(f"edge {e.id} has unknown class {e.road_class!r}")
            self.edges[e.id] = e
        self.adj: dict[int, list[Edge]] = {n: [] for n in self.nodes}
        for e in self.edges.values():
            self.adj[e.source].append(e)
        for lst in self.adj.values():
            lst.sort(key=lambda e: (e.target, e.id))
        self._node_tree = None
        self._edge_index = None

    def __repr__(self):
        return f"RoadGraph({len(self.nodes)} nodes, {len(self.edges)} edges)"

    def subgraph_without(self, edge_ids: Iterable[int]) -> "RoadGraph":
        drop = set(edge_ids)
        return RoadGraph(self.nodes, (e for eid, e in self.edges.items() if eid not in drop))

    @property
    def node_ids(self) -> np.ndarray:
        return np.fromiter(self.nodes, dtype=np.int64, count=len(self.nodes))

    def _nodes_tree(self):
        if self._node_tree is None:
            ids = self.node_ids
            ll = np.array([self.nodes[i] for i in ids])
            self._node_tree = (cKDTree(_unit_vectors(ll[:, 0], ll[:, 1])), ids)
        return self._node_tree


def _unit_vectors(lon, lat) -> np.ndarray:
    lon = np.radians(np.asarray(lon, float))
    lat = np.radians(np.asarray(lat, float))
    return np.column_stack([np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)])


def _chord(meters: float) -> float:
    return 2.0 * math.sin(min(meters / (2.0 * EARTH_RADIUS_M), math.pi / 2))


# ---------------------------------------------------------------- loading


def load_graph(nodes_path: str | Path, edges_path: str | Path, report: LoadReport | None = None) -> RoadGraph:
    """Read ``nodes.csv`` and ``edges.csv``; bad or dangling edge rows are tallied and skipped."""
    report = LoadReport() if report is None else report
    nodes: dict[int, tuple[float, float]] = {}
    with open(nodes_path, newline="") as f:
        for row in csv.DictReader(f):
            try:
                nid = int(row["node_id"])
                lon, lat = float(row["lon"]), float(row["lat"])
            except (KeyError, TypeError, ValueError):
                report.reject("bad node row")
                continue
            if nid in nodes:
                report.reject("duplicate node id")
                continue
            nodes[nid] = (lon, lat)
    edges: dict[int, Edge] = {}
    with open(edges_path, newline="") as f:
        for row in csv.DictReader(f):
            try:
                e = Edge(
                    int(row["edge_id"]),
                    int(row["from_node"]),
                    int(row["to_node"]),
                    float(row["length_m"]),
                    row["class"].strip(),
                )
            except (KeyError, TypeError, ValueError, AttributeError):
                report.reject("bad edge row")
                continue
            if e.id in edges:
                report.reject("duplicate edge id")
            elif e.source not in nodes or e.target not in nodes:
                report.reject("unknown node")
            elif e.length <= 0:
                report.reject("non-positive length")
            elif e.road_class not in ROAD_CLASSES:
                report.reject("unknown class")
            else:
                edges[e.id] = e
    if not nodes or not edges:
        raise ValueError("road graph is empty")
    if report.n_rejected:
        logger.warning("road graph: rejected %d row(s) %s", report.n_rejected, report.reasons)
    return RoadGraph(nodes, edges.values())


def write_graph(g: RoadGraph, nodes_path: str | Path, edges_path: str | Path) -> None:
    with open(nodes_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["node_id", "lon", "lat"])
        for nid, (lon, lat) in g.nodes.items():
            w.writerow([nid, f"{lon:.7f}", f"{lat:.7f}"])
    with open(edges_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["edge_id", "from_node", "to_node", "length_m", "class"])
        for e in g.edges.values():
            w.writerow([e.id, e.source, e.target, f"{e.length:.3f}", e.road_class])


# ---------------------------------------------------------------- restrictions


def _parse_hhmm(s: str) -> int:
    h, m = s.strip().split(":")
    secs = int(h) * 3600 + int(m) * 60
    if not 0 <= secs <= 86400:
        raise ValueError(f"time of day out of range: {s!r}")
    return secs


@dataclass
class RestrictedArea:
    polygons: list[list[list[tuple[float, float]]]]
    windows: list[tuple[int, int]]
    label: str = ""

    def __post_init__(self):
        for poly in self.polygons:
            for ring in poly:
                if len(ring) < 4 or tuple(ring[0]) != tuple(ring[-1]):
                    raise ValueError(f"restricted area {self.label!r} has an invalid ring")
        self._geom = MultiPolygon([Polygon(p[0], p[1:]) for p in self.polygons])

    def active(self, time_of_day: float) -> bool:
        t = time_of_day % 86400
        for start, end in self.windows:
            if start <= end:
                if start <= t < end:
                    return True
            elif t >= start or t < end:  # window wraps midnight
                return True
        return False

    def contains(self, lon, lat) -> np.ndarray:
        return shapely.contains_xy(self._geom, np.asarray(lon, float), np.asarray(lat, float))

    @classmethod
    def from_feature(cls, feat: dict, index: int = 0) -> "RestrictedArea":
        g = feat["geometry"]
        props = feat.get("properties") or {}
        if g["type"] == "Polygon":
            polys = [g["coordinates"]]
        elif g["type"] == "MultiPolygon":
            polys = g["coordinates"]
        else:
            raise ValueError(f"restricted area geometry must be a polygon, got {g['type']!r}")
        windows = []
        for w in props.get("active_windows", ["00:00-24:00"]):
            a, b = w.split("-")
            windows.append((_parse_hhmm(a), _parse_hhmm(b)))
        return cls(
            [[[tuple(p) for p in ring] for ring in poly] for poly in polys],
            windows,
            str(props.get("label", f"area{index}")),
        )


def load_restricted_areas(path: str | Path) -> list[RestrictedArea]:
    with open(path) as f:
        doc = json.load(f)
    feats = doc["features"] if doc.get("type") == "FeatureCollection" else [doc]
    return [RestrictedArea.from_feature(ft, i) for i, ft in enumerate(feats)]


def restricted_edges(g: RoadGraph, areas: Sequence[RestrictedArea], time_of_day: float) -> frozenset[int]:
    active = [a for a in areas if a.active(time_of_day)]
    if not active or not g.edges:
        return frozenset()
    ids = np.fromiter(g.edges, dtype=np.int64)
    src = np.array([g.nodes[g.edges[i].source] for i in ids])
    dst = np.array([g.nodes[g.edges[i].target] for i in ids])
    mid = (src + dst) / 2.0
    inside = np.zeros(len(ids), bool)
    for a in active:
        inside |= a.contains(mid[:, 0], mid[:, 1])
    return frozenset(ids[inside].tolist())


def apply_restrictions(g: RoadGraph, areas: Sequence[RestrictedArea], time_of_day: float) -> RoadGraph:
    """Copy of ``g`` without edges whose midpoint lies in an area active at ``time_of_day`` (seconds)."""
    return g.subgraph_without(restricted_edges(g, areas, time_of_day))


# ---------------------------------------------------------------- routing


def shortest_path(g: RoadGraph, src: int, dst: int, banned: frozenset[int] | set[int] = frozenset()) -> Path | None:
    """Dijkstra over edge lengths. Returns None when ``dst`` is unreachable.

    Edges in ``banned`` are skipped. Equal-distance ties pop the smaller node
    id first.
    """
    if src not in g.nodes or dst not in g.nodes:
        raise KeyError(f"node {src if src not in g.nodes else dst} not in graph")
    if src == dst:
        return Path([src], [], 0.0)
    dist = {src: 0.0}
    pred: dict[int, Edge] = {}
    done = set()
    heap = [(0.0, src)]
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        if u == dst:
            break
        done.add(u)
        for e in g.adj[u]:
            if e.id in banned or e.target in done:
                continue
            nd = d + e.length
            if nd < dist.get(e.target, math.inf):
                dist[e.target] = nd
                pred[e.target] = e
                heapq.heappush(heap, (nd, e.target))
    if dst not in pred:
        return None
    edges = []
    node = dst
    while node != src:
        e = pred[node]
        edges.append(e)
        node = e.source
    edges.reverse()
    return Path([src] + [e.target for e in edges], [e.id for e in edges], float(sum(e.length for e in edges)))


def _middle_edge(g: RoadGraph, path: Path, middle: str) -> int:
    m = len(path.edges)
    if middle == "index":
        return path.edges[math.ceil(m / 2) - 1]
    if middle == "arc":
        half = path.length / 2.0
        run = 0.0
        for eid in path.edges:
            run += g.edges[eid].length
            if run >= half:
                return eid
        return path.edges[-1]
    raise ValueError(f"unknown middle rule {middle!r}")


def k_shortest_paths(
    g: RoadGraph,
    src: int,
    dst: int,
    K: int,
    middle: str = "index",
    banned: frozenset[int] = frozenset(),
) -> list[Path]:
    """Link-elimination K shortest paths.

    After each Dijkstra search the middle edge of the found path is removed
    and removals accumulate. Paths come back in generation order, which is
    not guaranteed to be sorted by length. ``middle`` is ``"index"`` (edge
    number ceil(m/2)) or ``"arc"`` (edge holding the half-length point).
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    if src not in g.nodes or dst not in g.nodes:
        raise KeyError("source or destination not in graph")
    removed = set(banned)
    paths: list[Path] = []
    while len(paths) < K:
        p = shortest_path(g, src, dst, removed)
        if p is None:
            break
        paths.append(p)
        if not p.edges:
            break
        removed.add(_middle_edge(g, p, middle))
    return paths


# ---------------------------------------------------------------- spatial queries


def snap_to_node(g: RoadGraph, lon: float, lat: float) -> int:
    """Nearest node by great-circle distance; ties go to the smaller id."""
    tree, ids = g._nodes_tree()
    k = min(8, len(ids))
    _, idx = tree.query(_unit_vectors([lon], [lat])[0], k=k)
    idx = np.atleast_1d(idx)
    cand = ids[idx]
    d = np.array([haversine((lon, lat), g.nodes[int(i)]) for i in cand])
    best = d.min()
    return int(cand[d <= best + 1e-6].min())


def snap_distance(g: RoadGraph, node: int, lon: float, lat: float) -> float:
    return haversine((lon, lat), g.nodes[node])


class _EdgeGridIndex:
    """Uniform grid over projected edge bounding boxes."""

    def __init__(self, g: RoadGraph, cell: float = INDEX_CELL_M):
        self.cell = cell
        ids = np.fromiter(g.edges, dtype=np.int64, count=len(g.edges))
        self.ids = ids
        a = np.array([g.nodes[g.edges[i].source] for i in ids])
        b = np.array([g.nodes[g.edges[i].target] for i in ids])
        self.a, self.b = a, b
        self.cls = [g.edges[i].road_class for i in ids]
        allpts = np.vstack([a, b])
        self.lon0, self.lat0 = float(allpts[:, 0].mean()), float(allpts[:, 1].mean())
        ax, ay = project_local(a[:, 0], a[:, 1], self.lon0, self.lat0)
        bx, by = project_local(b[:, 0], b[:, 1], self.lon0, self.lat0)
        lo_x = np.floor(np.minimum(ax, bx) / cell).astype(int)
        hi_x = np.floor(np.maximum(ax, bx) / cell).astype(int)
        lo_y = np.floor(np.minimum(ay, by) / cell).astype(int)
        hi_y = np.floor(np.maximum(ay, by) / cell).astype(int)
        self.buckets: dict[tuple[int, int], list[int]] = {}
        for k in range(len(ids)):
            for cx in range(lo_x[k], hi_x[k] + 1):
                for cy in range(lo_y[k], hi_y[k] + 1):
                    self.buckets.setdefault((cx, cy), []).append(k)
        self.bounds = (lo_x.min(), hi_x.max(), lo_y.min(), hi_y.max())

    def nearest(self, lon: float, lat: float) -> tuple[float, str]:
        x, y = project_local([lon], [lat], self.lon0, self.lat0)
        cx, cy = int(math.floor(x[0] / self.cell)), int(math.floor(y[0] / self.cell))
        x0, x1, y0, y1 = self.bounds
        max_ring = max(abs(cx - x0), abs(cx - x1), abs(cy - y0), abs(cy - y1)) + 1
        seen: set[int] = set()
        best = (math.inf, "")
        for r in range(max_ring + 1):
            cand = []
            for i in range(cx - r, cx + r + 1):
                for j in range(cy - r, cy + r + 1):
                    if max(abs(i - cx), abs(j - cy)) != r:
                        continue
                    for k in self.buckets.get((i, j), ()):
                        if k not in seen:
                            seen.add(k)
                            cand.append(k)
            if cand:
                d, c = _segment_distances(lon, lat, self.a[cand], self.b[cand], [self.cls[k] for k in cand])
                if d < best[0]:
                    best = (d, c)
            # anything beyond ring r is at least r cells away; 1% slack covers projection drift
            if best[0] < math.inf and r * self.cell > best[0] * 1.01 + 1.0:
                break
        return best


def _segment_distances(lon, lat, a, b, classes) -> tuple[float, str]:
    ax, ay = project_local(a[:, 0], a[:, 1], lon, lat)
    bx, by = project_local(b[:, 0], b[:, 1], lon, lat)
    dx, dy = bx - ax, by - ay
    seg2 = dx * dx + dy * dy
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(seg2 > 0, -(ax * dx + ay * dy) / seg2, 0.0)
    t = np.clip(t, 0.0, 1.0)
    px, py = ax + t * dx, ay + t * dy
    d = np.hypot(px, py)
    k = int(np.argmin(d))
    return float(d[k]), classes[k]


def distance_to_nearest_road(g: RoadGraph, lon: float, lat: float, brute_force: bool = False) -> tuple[float, str]:
    """Minimum point-to-centerline distance (m) and the class of that road."""
    if not g.edges:
        raise ValueError("graph has no edges")
    if brute_force:
        ids = list(g.edges)
        a = np.array([g.nodes[g.edges[i].source] for i in ids])
        b = np.array([g.nodes[g.edges[i].target] for i in ids])
        return _segment_distances(lon, lat, a, b, [g.edges[i].road_class for i in ids])
    if g._edge_index is None:
        g._edge_index = _EdgeGridIndex(g)
    return g._edge_index.nearest(lon, lat)


# ---------------------------------------------------------------- POIs


@dataclass(frozen=True)
class Poi:
    name: str
    lon: float
    lat: float
    category: str

    def __post_init__(self):
        if not (-180 <= self.lon <= 180 and -90 <= self.lat <= 90):
            raise ValueError(f"POI {self.name!r} has out-of-range coordinates")
        if self.category not in POI_CATEGORIES:
            raise ValueError(f"POI {self.name!r} has unknown category {self.category!r}")


class PoiIndex:
    def __init__(self, pois: Sequence[Poi]):
        self.pois = list(pois)
        if self.pois:
            self._tree = cKDTree(_unit_vectors([p.lon for p in self.pois], [p.lat for p in self.pois]))
        else:
            self._tree = None

    def __len__(self):
        return len(self.pois)

    def within(self, lon: float, lat: float, radius_m: float) -> list[Poi]:
        if self._tree is None:
            return []
        idx = self._tree.query_ball_point(_unit_vectors([lon], [lat])[0], _chord(radius_m) * (1 + 1e-9))
        out = [self.pois[i] for i in sorted(idx)]
        return [p for p in out if haversine((lon, lat), (p.lon, p.lat)) <= radius_m]

    def nearest_distance(self, lon: float, lat: float) -> float:
        if self._tree is None:
            return math.inf
        _, i = self._tree.query(_unit_vectors([lon], [lat])[0])
        p = self.pois[int(i)]
        return haversine((lon, lat), (p.lon, p.lat))


def load_pois(path: str | Path) -> list[Poi]:
    with open(path) as f:
        doc = json.load(f)
    out = []
    for feat in doc.get("features", []):
        g = feat["geometry"]
        if g["type"] != "Point":
            raise ValueError("POI features must be points")
        props = feat.get("properties") or {}
        out.append(Poi(str(props.get("name", "")), float(g["coordinates"][0]), float(g["coordinates"][1]), props["category"]))
    return out


def write_pois(pois: Sequence[Poi], path: str | Path) -> None:
    doc = {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [round(p.lon, 7), round(p.lat, 7)]},
                "properties": {"name": p.name, "category": p.category},
            }
            for p in pois
        ],
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)


# ---------------------------------------------------------------- routing service


class Router:
    """Snapping plus cached n-th shortest path lengths on time-restricted graphs."""

    def __init__(
        self,
        g: RoadGraph,
        areas: Sequence[RestrictedArea] = (),
        max_snap_m: float = 2000.0,
        middle: str = "index",
        utc_offset_s: int = 0,
    ):
        self.g = g
        self.areas = list(areas)
        self.max_snap_m = max_snap_m
        self.middle = middle
        self.utc_offset_s = utc_offset_s
        self._banned_cache: dict[tuple, frozenset[int]] = {}
        self._paths = lru_cache(maxsize=200_000)(self._paths_uncached)

    def banned_at(self, timestamp: float | None) -> frozenset[int]:
        if timestamp is None or not self.areas:
            return frozenset()
        tod = (timestamp + self.utc_offset_s) % 86400
        key = tuple(a.active(tod) for a in self.areas)
        if key not in self._banned_cache:
            self._banned_cache[key] = restricted_edges(self.g, self.areas, tod)
        return self._banned_cache[key]

    def snap(self, lon: float, lat: float) -> int | None:
        node = snap_to_node(self.g, lon, lat)
        if snap_distance(self.g, node, lon, lat) > self.max_snap_m:
            return None
        return node

    def _paths_uncached(self, src: int, dst: int, K: int, banned: frozenset[int]) -> tuple[Path, ...]:
        return tuple(k_shortest_paths(self.g, src, dst, K, middle=self.middle, banned=banned))

    def k_paths(self, src: int, dst: int, K: int, timestamp: float | None = None) -> tuple[Path, ...]:
        return self._paths(src, dst, K, self.banned_at(timestamp))

    def nth_path_length(self, origin, dest, n: int, timestamp: float | None = None) -> float | None:
        """Length of the n-th link-elimination path between two lon/lat points.

        Falls back to the last generated order when fewer than n exist.
        Returns None when a point is too far from the network or the pair is
        unreachable.
        """
        s = self.snap(*origin)
        d = self.snap(*dest)
        if s is None or d is None:
            return None
        paths = self.k_paths(s, d, n, timestamp)
        if not paths:
            return None
        return paths[min(n, len(paths)) - 1].length
