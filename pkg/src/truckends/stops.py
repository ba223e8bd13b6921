"""Speed-threshold derivation and stop aggregation."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .ingest import Trajectory, _runs, haversine_array

logger = logging.getLogger(__name__)


@dataclass
class SpeedHistogram:
    bin_width: float
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=float)
        if np.any(self.counts < 0):
            raise ValueError("histogram counts must be non-negative")

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(len(self.counts)) + 0.5) * self.bin_width

    @classmethod
    def from_speeds(cls, speeds, bin_width: float = 0.5, max_speed: float = 150.0) -> "SpeedHistogram":
        """Tally speeds (km/h) into bins ``[k*w, (k+1)*w)``; speeds above ``max_speed`` go to the last bin."""
        n_bins = int(np.ceil(max_speed / bin_width))
        idx = np.minimum((np.asarray(speeds, float) / bin_width).astype(np.int64), n_bins - 1)
        return cls(bin_width, np.bincount(idx, minlength=n_bins))

    def merge(self, other: "SpeedHistogram") -> "SpeedHistogram":
        if other.bin_width != self.bin_width:
            raise ValueError("cannot merge histograms with different bin widths")
        n = max(len(self.counts), len(other.counts))
        a = np.pad(self.counts, (0, n - len(self.counts)))
        b = np.pad(other.counts, (0, n - len(other.counts)))
        return SpeedHistogram(self.bin_width, a + b)


@dataclass(frozen=True)
class SpeedThreshold:
    value: float
    fallback: bool = False


@dataclass
class Stop:
    truck_id: str
    lon: float
    lat: float
    start_time: int
    end_time: int
    n_points: int
    start_index: int = -1
    end_index: int = -1

    @property
    def dwell(self) -> int:
        return self.end_time - self.start_time


def interval_speeds(traj: Trajectory) -> np.ndarray:
    """Speed in km/h over each pair of adjacent fixes (``len(traj) - 1`` values)."""
    d = haversine_array(traj.lon[:-1], traj.lat[:-1], traj.lon[1:], traj.lat[1:])
    return d / np.diff(traj.timestamp) * 3.6


def derive_speed_threshold(
    hist: SpeedHistogram,
    window: int = 3,
    search_max: float = 20.0,
    default: float = 5.0,
) -> SpeedThreshold:
    """Pick the transition point between the drift hump and driving speeds.

    The histogram is smoothed with a centred moving average of ``window``
    bins. Among the local minima whose bin centre lies in ``(0, search_max]``,
    the one with the lowest smoothed density wins; ties go to the lower speed.
    With no local minimum in the window, ``default`` is returned with
    ``fallback=True``.
    """
    if hist.total <= 0:
        raise ValueError("empty speed histogram")
    counts = hist.counts / hist.total
    kernel = np.ones(window)
    # divide by the number of bins actually covered so the edges are not damped
    smooth = np.convolve(counts, kernel, mode="same") / np.convolve(np.ones_like(counts), kernel, mode="same")
    centers = hist.centers
    # densities equal up to rounding count as equal, so rescaled counts pick the same bin
    tol = 1e-9 * float(smooth.max())
    best = None
    for i in range(1, len(smooth) - 1):
        if not 0.0 < centers[i] <= search_max:
            continue
        if smooth[i] <= smooth[i - 1] + tol and smooth[i] <= smooth[i + 1] + tol:
            if best is None or smooth[i] < smooth[best] - tol:
                best = i
    if best is None:
        logger.warning("no speed-distribution minimum in (0, %s] km/h; using %s km/h", search_max, default)
        return SpeedThreshold(default, fallback=True)
    return SpeedThreshold(float(centers[best]))


def detect_stops(traj: Trajectory, v_thresh: float, speeds: np.ndarray | None = None) -> list[Stop]:
    """Aggregate maximal runs of sub-threshold intervals into stops."""
    if v_thresh <= 0:
        raise ValueError("speed threshold must be positive")
    speeds = interval_speeds(traj) if speeds is None else speeds
    out = []
    for a, b in _runs(speeds < v_thresh):
        # intervals a..b-1 span fixes a..b
        lo, hi = a, b + 1
        out.append(
            Stop(
                truck_id=traj.truck_id,
                lon=float(traj.lon[lo:hi].mean()),
                lat=float(traj.lat[lo:hi].mean()),
                start_time=int(traj.timestamp[lo]),
                end_time=int(traj.timestamp[b]),
                n_points=hi - lo,
                start_index=lo,
                end_index=b,
            )
        )
    return out


def fleet_histogram(trajectories: Iterable[Trajectory], bin_width: float = 0.5, max_speed: float = 150.0) -> SpeedHistogram:
    hist = SpeedHistogram(bin_width, np.zeros(int(np.ceil(max_speed / bin_width))))
    for traj in trajectories:
        hist = hist.merge(SpeedHistogram.from_speeds(interval_speeds(traj), bin_width, max_speed))
    return hist


def attach_indices(traj: Trajectory, stops: list[Stop]) -> list[Stop]:
    """Recover fix index ranges for stops read back from ``stops.csv``."""
    ts = traj.timestamp
    for s in stops:
        s.start_index = int(np.searchsorted(ts, s.start_time))
        s.end_index = int(np.searchsorted(ts, s.end_time))
        if s.end_index >= len(ts) or ts[s.start_index] != s.start_time or ts[s.end_index] != s.end_time:
            raise ValueError(f"stop {s.start_time}-{s.end_time} does not align with trajectory {traj.truck_id!r}")
    return stops
