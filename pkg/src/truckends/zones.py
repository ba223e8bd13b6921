"""Square-zone aggregation of trip ends (hotspots) and trips (OD matrices)."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .chains import Trip
from .identify import TripEnd
from .ingest import project_local, unproject_local


@dataclass
class ZoneGrid:
    """Counts keyed by cell ``(ix, iy)`` or by cell pair ``((ix, iy), (jx, jy))``.

    Cells are ``cell_m`` squares in an equirectangular projection about
    ``(origin_lon, origin_lat)``; cell ``(0, 0)`` has that point as its
    south-west corner.
    """

    origin_lon: float
    origin_lat: float
    cell_m: float
    counts: Counter = field(default_factory=Counter)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def cell_of(self, lon, lat) -> list[tuple[int, int]]:
        x, y = project_local(np.atleast_1d(lon), np.atleast_1d(lat), self.origin_lon, self.origin_lat)
        ix = np.floor(x / self.cell_m).astype(int)
        iy = np.floor(y / self.cell_m).astype(int)
        return list(zip(ix.tolist(), iy.tolist()))

    def cell_center(self, cell: tuple[int, int]) -> tuple[float, float]:
        lon, lat = unproject_local((cell[0] + 0.5) * self.cell_m, (cell[1] + 0.5) * self.cell_m, self.origin_lon, self.origin_lat)
        return float(lon), float(lat)


def _default_origin(points: np.ndarray) -> tuple[float, float]:
    if len(points) == 0:
        return 0.0, 0.0
    return float(points[:, 0].mean()), float(points[:, 1].mean())


def hotspot_grid(ends: Sequence[TripEnd], cell_m: float = 3000.0, origin: tuple[float, float] | None = None) -> ZoneGrid:
    """Per-cell counts of kept trip ends."""
    if cell_m <= 0:
        raise ValueError("cell size must be positive")
    kept = [e for e in ends if e.kept]
    pts = np.array([(e.lon, e.lat) for e in kept]).reshape(-1, 2)
    lon0, lat0 = origin if origin is not None else _default_origin(pts)
    grid = ZoneGrid(lon0, lat0, cell_m)
    if len(pts):
        grid.counts.update(grid.cell_of(pts[:, 0], pts[:, 1]))
    return grid


def od_matrix(trips: Sequence[Trip], cell_m: float = 3000.0, origin: tuple[float, float] | None = None) -> ZoneGrid:
    """Trip counts by (origin cell, destination cell), intra-cell trips included."""
    if cell_m <= 0:
        raise ValueError("cell size must be positive")
    o = np.array([(t.origin.lon, t.origin.lat) for t in trips]).reshape(-1, 2)
    d = np.array([(t.destination.lon, t.destination.lat) for t in trips]).reshape(-1, 2)
    lon0, lat0 = origin if origin is not None else _default_origin(np.vstack([o, d]))
    grid = ZoneGrid(lon0, lat0, cell_m)
    if len(trips):
        grid.counts.update(zip(grid.cell_of(o[:, 0], o[:, 1]), grid.cell_of(d[:, 0], d[:, 1])))
    return grid


def transpose(grid: ZoneGrid) -> ZoneGrid:
    out = ZoneGrid(grid.origin_lon, grid.origin_lat, grid.cell_m)
    for (a, b), n in grid.counts.items():
        out.counts[(b, a)] += n
    return out
