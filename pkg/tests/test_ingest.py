import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from truckends.ingest import (
    CityBoundary,
    EmptyTrajectory,
    GpsRecord,
    ParseReport,
    Trajectory,
    clean_trajectory,
    clip_to_city,
    haversine,
    parse_gps_csv,
    project_local,
    unproject_local,
)


def law_of_cosines(p1, p2, r=6_371_000.0):
    lon1, lat1, lon2, lat2 = map(math.radians, (*p1, *p2))
    c = math.sin(lat1) * math.sin(lat2) + math.cos(lat1) * math.cos(lat2) * math.cos(lon2 - lon1)
    return r * math.acos(max(-1.0, min(1.0, c)))


def vector_arc(p1, p2, r=6_371_000.0):
    # angle between unit vectors via atan2(|u x v|, u . v)
    def unit(p):
        lon, lat = map(math.radians, p)
        return np.array([math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon), math.sin(lat)])

    u, v = unit(p1), unit(p2)
    return r * math.atan2(np.linalg.norm(np.cross(u, v)), float(u @ v))


def ray_cast(x, y, ring):
    inside = False
    for (x1, y1), (x2, y2) in zip(ring, ring[1:]):
        if (y1 > y) != (y2 > y) and x < x1 + (y - y1) * (x2 - x1) / (y2 - y1):
            inside = not inside
    return inside


coords = st.tuples(st.floats(115.0, 118.0), st.floats(38.0, 41.0))


def recs(rows, truck="t"):
    return [GpsRecord(truck, t, lon, lat) for t, lon, lat in rows]


def test_haversine_one_degree_of_longitude():
    d = haversine((116.0, 39.0), (117.0, 39.0))
    assert d == pytest.approx(law_of_cosines((116.0, 39.0), (117.0, 39.0)), rel=1e-9)
    assert d == pytest.approx(vector_arc((116.0, 39.0), (117.0, 39.0)), rel=1e-3)


@settings(max_examples=100, deadline=None)
@given(coords, coords)
def test_haversine_symmetric(a, b):
    assert haversine(a, b) == haversine(b, a) >= 0


def test_haversine_zero_and_meridian():
    assert haversine((10.0, 20.0), (10.0, 20.0)) == 0.0
    # one degree of latitude is R * pi / 180
    assert haversine((0.0, 0.0), (0.0, 1.0)) == pytest.approx(6_371_000 * math.pi / 180, rel=1e-12)



@settings(max_examples=200, deadline=None)
@given(coords, coords, coords)
def test_haversine_triangle_inequality(a, b, c):
    assert haversine(a, c) <= (haversine(a, b) + haversine(b, c)) * (1 + 1e-6) + 1e-9


@settings(max_examples=100, deadline=None)
@given(coords, coords)
def test_haversine_matches_law_of_cosines(a, b):
    d = haversine(a, b)
    if d > 1000:
        assert d == pytest.approx(law_of_cosines(a, b), rel=1e-6)


def test_projection_round_trip():
    x, y = project_local([116.5, 116.3], [39.95, 39.85], 116.4, 39.9)
    lon, lat = unproject_local(x, y, 116.4, 39.9)
    np.testing.assert_allclose(lon, [116.5, 116.3], atol=1e-12)
    np.testing.assert_allclose(lat, [39.95, 39.85], atol=1e-12)


def test_trajectory_rejects_bad_input():
    with pytest.raises(EmptyTrajectory):
        Trajectory("a", [1], [0.0], [0.0])
    with pytest.raises(ValueError):
        Trajectory("a", [2, 1], [0.0, 0.0], [0.0, 0.0])


def test_clean_sorts_and_deduplicates():
    rows = [(30, 116.0, 39.0), (0, 116.0, 39.0), (30, 116.1, 39.1), (60, 116.0001, 39.0)]
    tr = clean_trajectory(recs(rows))
    assert tr.timestamp.tolist() == [0, 30, 60]
    # first occurrence of timestamp 30 in input order wins
    assert tr.lon[1] == 116.0


def test_clean_drops_spike():
    rows = [(i * 30, 116.0 + i * 1e-4, 39.0) for i in range(10)]
    rows[5] = (150, 117.0, 39.0)  # ~85 km away for 30 s
    tr = clean_trajectory(recs(rows))
    assert 150 not in tr.timestamp.tolist()
    assert len(tr) == 9


def test_clean_keeps_lone_gap_hop():
    # two plausible clusters joined by one implausible hop: neither side is the culprit
    rows = [(0, 116.0, 39.0), (30, 116.0001, 39.0), (60, 116.5, 39.0), (90, 116.5001, 39.0)]
    assert len(clean_trajectory(recs(rows))) == 4


def test_clean_empty_after_dedup():
    with pytest.raises(EmptyTrajectory):
        clean_trajectory(recs([(5, 116.0, 39.0), (5, 116.0, 39.0)]))


track = st.lists(
    st.tuples(st.integers(0, 5000), st.floats(116.0, 116.2), st.floats(39.0, 39.2)), min_size=2, max_size=40
)


@settings(max_examples=150, deadline=None)
@given(track)
def test_clean_idempotent(rows):
    try:
        once = clean_trajectory(recs(rows))
    except EmptyTrajectory:
        return
    twice = clean_trajectory(once.records)
    assert once.timestamp.tolist() == twice.timestamp.tolist()
    assert np.array_equal(once.lon, twice.lon) and np.array_equal(once.lat, twice.lat)


SQUARE = [(116.0, 39.0), (116.1, 39.0), (116.1, 39.1), (116.0, 39.1), (116.0, 39.0)]
CONCAVE = [(0, 0), (4, 0), (4, 4), (2, 1.5), (0, 4), (0, 0)]


def test_boundary_matches_ray_casting_on_concave_polygon():
    b = CityBoundary([[CONCAVE]])
    rng = np.random.default_rng(3)
    x, y = rng.uniform(-0.5, 4.5, 2000), rng.uniform(-0.5, 4.5, 2000)
    got = b.contains(x, y)
    want = np.array([ray_cast(a, c, CONCAVE) for a, c in zip(x, y)])
    assert np.array_equal(got, want)


def test_boundary_hole_and_vertex():
    outer = [(0, 0), (10, 0), (10, 10), (0, 10), (0, 0)]
    hole = [(4, 4), (6, 4), (6, 6), (4, 6), (4, 4)]
    b = CityBoundary([[outer, hole]])
    assert b.contains([1.0, 5.0, 0.0], [1.0, 5.0, 0.0]).tolist() == [True, False, False]


def test_boundary_rejects_open_ring():
    with pytest.raises(ValueError):
        CityBoundary([[SQUARE[:-1]]])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(115.95, 116.15), st.floats(38.95, 39.15)), min_size=2, max_size=50))
def test_clip_covers_inside_records_once(pts):
    tr = Trajectory("t", np.arange(len(pts)) * 30, [p[0] for p in pts], [p[1] for p in pts])
    b = CityBoundary([[SQUARE]])
    pieces = clip_to_city(tr, b, min_records=2)
    inside = [ray_cast(lo, la, SQUARE) for lo, la in pts]
    covered = [t for p in pieces for t in p.timestamp.tolist()]
    assert len(covered) == len(set(covered))
    expected = []
    run = []
    for t, ins in zip(tr.timestamp.tolist(), inside + [False]):
        if ins:
            run.append(t)
        else:
            if len(run) >= 2:
                expected += run
            run = []
    if len(run) >= 2:
        expected += run
    assert covered == expected


def test_clip_in_out_in():
    lon = [116.05] * 5 + [116.5] * 3 + [116.05] * 5
    lat = [39.05 + i * 1e-4 for i in range(13)]
    tr = Trajectory("t", np.arange(13) * 30, lon, lat)
    b = CityBoundary([[SQUARE]])
    assert [len(p) for p in clip_to_city(tr, b)] == [5, 5]
    assert len(clip_to_city(tr.slice(0, 5), b)) == 1
    assert clip_to_city(tr.slice(5, 8), b) == []


def test_parse_gps_csv_tallies_bad_rows(tmp_path):
    p = tmp_path / "gps.csv"
    p.write_text(
        "truck_id,timestamp,lon,lat,speed,heading\n"
        "a,100,116.0,39.0,10,90\n"
        "a,oops,116.0,39.0,,\n"
        "a,200,200.0,39.0,,\n"
        ",300,116.0,39.0,,\n"
        "b,400,116.1,39.1,,\n"
    )
    rep = ParseReport()
    rows = parse_gps_csv(p, rep)
    assert [r.truck_id for r in rows] == ["a", "b"]
    assert rep.n_rows == 5 and rep.n_invalid == 3
    assert rows[1].speed is None


def test_parse_gps_csv_bad_header(tmp_path):
    p = tmp_path / "gps.csv"
    p.write_text("id,ts,x,y\n")
    with pytest.raises(ValueError):
        parse_gps_csv(p)
