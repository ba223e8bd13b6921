"""Multilevel dwell-time thresholds from iterated Lorenz-curve (Loubar) splits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class DegenerateDwells(ValueError):
    pass


@dataclass
class LorenzCurve:
    F: np.ndarray
    L: np.ndarray

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.F.tolist(), self.L.tolist()))


@dataclass
class LadderLevel:
    threshold: float
    fstar: float
    population: int


@dataclass
class ThresholdLadder:
    levels: list[float] = field(default_factory=list)
    provenance: list[LadderLevel] = field(default_factory=list)

    def __post_init__(self):
        if any(b >= a for a, b in zip(self.levels, self.levels[1:])):
            raise ValueError("ladder levels must strictly decrease")

    def __len__(self):
        return len(self.levels)

    def __iter__(self):
        return iter(self.levels)

    def to_dict(self) -> dict:
        return {
            "time_threshold_ladder_s": [float(v) for v in self.levels],
            "levels": [
                {"threshold_s": float(p.threshold), "fstar": float(p.fstar), "population": int(p.population)}
                for p in self.provenance
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ThresholdLadder":
        prov = [LadderLevel(p["threshold_s"], p["fstar"], p["population"]) for p in d.get("levels", [])]
        return cls([float(v) for v in d["time_threshold_ladder_s"]], prov)


def lorenz(dwells) -> LorenzCurve:
    """Lorenz curve of dwell times sorted ascending, starting at (0, 0)."""
    d = np.sort(np.asarray(dwells, dtype=float))
    if len(d) < 2:
        raise DegenerateDwells("need at least 2 dwells")
    total = d.sum()
    if total <= 0:
        raise DegenerateDwells("all dwells are zero")
    n = len(d)
    F = np.arange(n + 1) / n
    L = np.r_[0.0, np.cumsum(d) / total]
    L[-1] = 1.0
    return LorenzCurve(F, L)


def loubar_fstar(curve: LorenzCurve) -> float:
    """Horizontal-axis intercept of the tangent at (1, 1).

    The tangent slope is taken from the final segment of the curve. A slope
    of at most 1 means the top of the distribution is balanced: 0 is returned.
    """
    if len(curve.F) < 2:
        raise ValueError("curve needs at least 2 points")
    dF = 1.0 - curve.F[-2]
    dL = 1.0 - curve.L[-2]
    if dF <= 0 or dL <= 0:
        raise ValueError("final Lorenz segment must have positive slope")
    s = dL / dF
    if s <= 1.0:
        return 0.0
    return min(max(1.0 - 1.0 / s, 0.0), math.nextafter(1.0, 0.0))


def derive_ladder(
    dwells,
    max_levels: int = 10,
    balance_eps: float = 0.01,
    min_population: int = 10,
    floor: float = 30.0,
) -> ThresholdLadder:
    """Iterate Loubar splits on the dwell population.

    Each round takes the dwell at ascending rank ``ceil(F* N)`` as the next
    threshold and drops every dwell at or above it. Iteration stops once the
    curve is balanced (``F* < balance_eps``), fewer than ``min_population``
    dwells remain, the threshold falls below ``floor`` or would not decrease,
    or ``max_levels`` thresholds exist.
    """
    pop = np.sort(np.asarray(dwells, dtype=float))
    if len(pop) == 0:
        raise ValueError("empty dwell population")
    levels: list[float] = []
    prov: list[LadderLevel] = []
    while len(levels) < max_levels and len(pop) >= min_population:
        if pop[-1] <= 0:
            break
        fstar = loubar_fstar(lorenz(pop))
        if fstar < balance_eps:
            break
        x = fstar * len(pop)
        # F* N is integral whenever total / max is; do not let rounding push it up a rank
        rank = round(x) if abs(x - round(x)) < 1e-9 * len(pop) else math.ceil(x)
        thr = float(pop[max(rank, 1) - 1])
        if thr < floor or (levels and thr >= levels[-1]):
            break
        levels.append(thr)
        prov.append(LadderLevel(thr, fstar, len(pop)))
        pop = pop[pop < thr]
    return ThresholdLadder(levels, prov)
