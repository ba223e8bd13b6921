from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from truckends.ingest import Trajectory, unproject_local
from truckends.stops import SpeedHistogram, detect_stops, derive_speed_threshold, fleet_histogram, interval_speeds


def track_from_xy(xs, ys, dt=30, truck="t"):
    lon, lat = unproject_local(np.asarray(xs, float), np.asarray(ys, float), 116.4, 39.9)
    return Trajectory(truck, np.arange(len(xs)) * dt, lon, lat)


def brute_valley(counts, lo, hi, width):
    # straight scan in exact arithmetic: smoothed value per bin, then the lowest interior local minimum
    n = len(counts)
    sm = []
    for i in range(n):
        window = [Fraction(counts[j]) for j in (i - 1, i, i + 1) if 0 <= j < n]
        sm.append(sum(window) / len(window))
    best = None
    for i in range(1, n - 1):
        c = (i + 0.5) * width
        if lo < c <= hi and sm[i] <= sm[i - 1] and sm[i] <= sm[i + 1]:
            if best is None or sm[i] < sm[best]:
                best = i
    return None if best is None else (best + 0.5) * width


def test_interval_speeds_examples():
    tr = track_from_xy([0, 0, 250, 500], [0, 0, 0, 0])
    v = interval_speeds(tr)
    assert len(v) == 3
    assert v[0] == pytest.approx(0.0, abs=1e-9)
    assert v[1] == pytest.approx(30.0, rel=1e-3)


def test_histogram_binning_and_merge():
    h = SpeedHistogram.from_speeds([0.1, 0.4, 0.6, 200.0], bin_width=0.5, max_speed=10)
    assert h.counts[0] == 2 and h.counts[1] == 1 and h.counts[-1] == 1
    assert h.total == 4
    assert h.merge(h).total == 8
    with pytest.raises(ValueError):
        h.merge(SpeedHistogram(1.0, [1]))


def bimodal(valley_kmh=4.0, width=0.5, n_bins=120):
    c = (np.arange(n_bins) + 0.5) * width
    counts = 1000 * np.exp(-0.5 * ((c - 1.0) / 0.8) ** 2) + 300 * np.exp(-0.5 * ((c - 40) / 10) ** 2)
    return SpeedHistogram(width, np.round(counts))


def test_threshold_bimodal_matches_brute_scan():
    h = bimodal()
    got = derive_speed_threshold(h)
    assert not got.fallback
    assert got.value == brute_valley(h.counts.tolist(), 0, 20, 0.5)
    assert 2.5 <= got.value <= 6.0


def test_threshold_monotone_falls_back(caplog):
    h = SpeedHistogram(0.5, np.arange(100, 0, -1))
    got = derive_speed_threshold(h)
    assert got.fallback and got.value == 5.0
    assert "using 5.0" in caplog.text


def test_threshold_tie_takes_smaller_speed():
    counts = np.full(80, 10.0)
    counts[5] = counts[11] = 0.0  # bins centred at 2.75 and 5.75
    counts[4] = counts[6] = counts[10] = counts[12] = 5.0
    got = derive_speed_threshold(SpeedHistogram(0.5, counts))
    assert got.value == 2.75


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 50), min_size=45, max_size=80), st.floats(0.1, 1000.0))
def test_threshold_scale_consistent(counts, c):
    counts = np.array(counts, float)
    if counts.sum() == 0:
        return
    a = derive_speed_threshold(SpeedHistogram(0.5, counts))
    b = derive_speed_threshold(SpeedHistogram(0.5, counts * c))
    assert a == b
    ref = brute_valley([int(v) for v in counts], 0, 20, 0.5)
    assert a.value == (5.0 if ref is None else ref)


def test_detect_single_run():
    xs = [0] * 10 + [300 * k for k in range(1, 6)]
    stops = detect_stops(track_from_xy(xs, [0] * len(xs)), 5.0)
    assert len(stops) == 1
    s = stops[0]
    assert s.n_points == 10 and s.dwell == 270 and s.start_index == 0 and s.end_index == 9


def test_detect_none_and_two_runs():
    moving = [300 * k for k in range(8)]
    assert detect_stops(track_from_xy(moving, [0] * 8), 5.0) == []
    xs = [0, 0, 0, 500, 500, 500]
    stops = detect_stops(track_from_xy(xs, [0] * 6), 5.0)
    assert [(s.start_index, s.end_index) for s in stops] == [(0, 2), (3, 5)]


def test_detect_centroid_is_mean():
    xs = [0, 2, 4, 1000]
    ys = [0, 3, 6, 1000]
    tr = track_from_xy(xs, ys)
    s = detect_stops(tr, 5.0)[0]
    assert s.lon == pytest.approx(tr.lon[:3].mean()) and s.lat == pytest.approx(tr.lat[:3].mean())


def test_detect_rejects_nonpositive_threshold():
    with pytest.raises(ValueError):
        detect_stops(track_from_xy([0, 1], [0, 0]), 0)


steps = st.lists(st.sampled_from([0.0, 5.0, 20.0, 60.0, 300.0]), min_size=2, max_size=60)


@settings(max_examples=100, deadline=None)
@given(steps, st.floats(0.5, 30.0), st.floats(0.5, 30.0))
def test_stops_ordered_disjoint_and_monotone(step, v1, v2):
    xs = np.r_[0.0, np.cumsum(step)]
    tr = track_from_xy(xs, np.zeros_like(xs))
    lo, hi = sorted((v1, v2))
    a, b = detect_stops(tr, lo), detect_stops(tr, hi)
    for stops in (a, b):
        for s, t in zip(stops, stops[1:]):
            assert s.end_time < t.start_time
        for s in stops:
            assert s.n_points >= 2 and s.dwell > 0
            assert 0 <= s.start_index < s.end_index < len(tr)
            assert tr.lon[s.start_index : s.end_index + 1].min() - 1e-12 <= s.lon <= tr.lon[s.start_index : s.end_index + 1].max() + 1e-12
    assert sum(s.dwell for s in a) <= sum(s.dwell for s in b)


def test_fleet_histogram_is_sum_of_parts():
    t1 = track_from_xy([0, 0, 100, 400], [0] * 4)
    t2 = track_from_xy([0, 50, 50], [0] * 3)
    h = fleet_histogram([t1, t2])
    assert h.total == 5
    assert np.array_equal(h.counts, fleet_histogram([t2, t1]).counts)
