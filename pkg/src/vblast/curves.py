"""Curve records shared by the analytic, Monte-Carlo and report layers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

# abscissa units: normalized SNR x (linear or dB) and average SNR gamma0 in dB
UNITS = ("x", "x_db", "gamma0_db")


def _to_db(grid, unit):
    grid = np.asarray(grid, dtype=float)
    if unit == "x":
        with np.errstate(divide="ignore"):
            return 10.0 * np.log10(grid)
    return grid


def _check_grid(grid, unit):
    if unit not in UNITS:
        raise ValueError(f"unknown abscissa unit {unit!r}")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a non-empty 1-D sequence")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    return grid


@dataclass
class AnalyticCurve:
    grid: np.ndarray
    values: np.ndarray
    label: str
    unit: str = "x"

    def __post_init__(self):
        self.grid = _check_grid(self.grid, self.unit)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError("grid and values differ in length")

    @property
    def grid_db(self):
        return _to_db(self.grid, self.unit)


@dataclass
class EstimatedCurve:
    """Monte-Carlo estimate with a 95% interval per grid point."""

    grid: np.ndarray
    estimates: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    trials: np.ndarray
    label: str
    unit: str = "x"
    method: str = field(default="wilson")

    def __post_init__(self):
        self.grid = _check_grid(self.grid, self.unit)
        for name in ("estimates", "ci_low", "ci_high"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        self.trials = np.broadcast_to(np.asarray(self.trials, dtype=np.int64), self.grid.shape).copy()

    @property
    def values(self):
        return self.estimates

    @property
    def grid_db(self):
        return _to_db(self.grid, self.unit)

    @classmethod
    def from_counts(cls, grid, events, trials, label, unit="x"):
        events = np.asarray(events, dtype=np.int64)
        trials = np.broadcast_to(np.asarray(trials, dtype=np.int64), events.shape)
        est = np.where(trials > 0, events / np.maximum(trials, 1), np.nan)
        lo, hi = wilson_interval(events, trials)
        return cls(grid, est, lo, hi, trials, label, unit)


def wilson_interval(events, trials, confidence: float = 0.95):
    """Wilson score interval for a binomial proportion (vectorized)."""
    k = np.asarray(events, dtype=float)
    n = np.asarray(trials, dtype=float)
    z = stats.norm.ppf(0.5 + confidence / 2.0)
    safe_n = np.maximum(n, 1.0)
    p = k / safe_n
    denom = 1.0 + z * z / safe_n
    center = (p + z * z / (2.0 * safe_n)) / denom
    half = z * np.sqrt(p * (1.0 - p) / safe_n + z * z / (4.0 * safe_n * safe_n)) / denom
    lo = np.clip(center - half, 0.0, 1.0)
    hi = np.clip(center + half, 0.0, 1.0)
    # the interval must contain the point estimate despite rounding
    lo = np.minimum(lo, p)
    hi = np.maximum(hi, p)
    lo = np.where(n > 0, lo, 0.0)
    hi = np.where(n > 0, hi, 1.0)
    return lo, hi


@dataclass
class OffsetRow:
    level: float
    offset_db: float | None
    abscissa_a: float | None
    abscissa_b: float | None

    @property
    def in_range(self) -> bool:
        return self.offset_db is not None


def level_crossing(curve, level: float):
    """Abscissa (dB) where ``curve`` crosses ``level``, or ``None``.

    Interpolates log10(value) linearly between neighbouring grid points in
    dB; the first crossing along the grid is reported.
    """
    xs = np.asarray(curve.grid_db, dtype=float)
    vs = np.asarray(curve.values, dtype=float)
    keep = np.isfinite(xs) & np.isfinite(vs) & (vs > 0)
    xs, vs = xs[keep], np.log10(vs[keep])
    target = np.log10(level)
    for i in range(len(xs) - 1):
        a, b = vs[i] - target, vs[i + 1] - target
        if a == 0:
            return float(xs[i])
        if a * b < 0:
            return float(xs[i] + (xs[i + 1] - xs[i]) * a / (a - b))
    if len(vs) and vs[-1] == target:
        return float(xs[-1])
    return None


def compare_curves(curve_a, curve_b, levels) -> list[OffsetRow]:
    """Horizontal offsets ``b - a`` in dB at the given probability levels.

    Levels that one of the curves never reaches come back with
    ``offset_db=None``.
    """
    ranges = []
    for c in (curve_a, curve_b):
        v = np.asarray(c.values, dtype=float)
        v = v[np.isfinite(v) & (v > 0)]
        if v.size == 0:
            raise ValueError(f"curve {c.label!r} has no positive values")
        ranges.append((v.min(), v.max()))
    if ranges[0][1] < ranges[1][0] or ranges[1][1] < ranges[0][0]:
        raise ValueError("curves have disjoint value ranges")
    rows = []
    for level in levels:
        xa = level_crossing(curve_a, level)
        xb = level_crossing(curve_b, level)
        off = xb - xa if xa is not None and xb is not None else None
        rows.append(OffsetRow(float(level), off, xa, xb))
    return rows
