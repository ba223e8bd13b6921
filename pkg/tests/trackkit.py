"""Hand-built trajectories and line/grid graphs in local meters."""

import numpy as np

from truckends.ingest import Trajectory, unproject_local
from truckends.roadnet import Edge, RoadGraph

LON0, LAT0 = 116.4, 39.9


def to_lonlat(x, y):
    lon, lat = unproject_local(np.asarray(x, float), np.asarray(y, float), LON0, LAT0)
    return lon, lat


def line_graph(n=12, spacing=1000.0, y=0.0, cls="secondary"):
    """Two-way road along the x axis with nodes every ``spacing`` meters."""
    lon, lat = to_lonlat(np.arange(n) * spacing, np.full(n, y))
    nodes = {i: (float(lon[i]), float(lat[i])) for i in range(n)}
    edges = []
    for i in range(n - 1):
        edges.append(Edge(len(edges), i, i + 1, spacing, cls))
        edges.append(Edge(len(edges), i + 1, i, spacing, cls))
    return RoadGraph(nodes, edges)


def build_track(plan, dt=30, speed=10.0, truck="t", y=0.0):
    """``plan`` items: ("stay", x, seconds) or ("go", x). Returns a noiseless Trajectory."""
    knots_t, knots_x = [0.0], [plan[0][1]]
    for item in plan:
        x_now = knots_x[-1]
        if item[0] == "stay":
            if item[1] != x_now:
                raise ValueError("stay must be at the current position")
            knots_t.append(knots_t[-1] + item[2])
            knots_x.append(x_now)
        else:
            knots_t.append(knots_t[-1] + abs(item[1] - x_now) / speed)
            knots_x.append(item[1])
    t = np.arange(0, knots_t[-1] + 1e-9, dt)
    x = np.interp(t, knots_t, knots_x)
    lon, lat = to_lonlat(x, np.full_like(x, y))
    return Trajectory(truck, (t + 1_526_601_600).astype(np.int64), lon, lat)
