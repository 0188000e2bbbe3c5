"""Fold periodic 1D sequences into 2D heatmaps and back.

A sequence sampled at a fixed period (for example one reading every 15
minutes, 96 readings per day) is reshaped so that each period becomes one
column of a grid: row r is the r-th sample of the period, column c is the
c-th period. Local 2D structure in that grid (same time of day across
neighbouring days) is what a 2D convolution can exploit; on the raw 1D
signal the same feature spans (m - 1) * P + 1 samples.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

MINUTES_PER_DAY = 1440


class TruncationWarning(UserWarning):
    """Trailing samples that do not fill a whole period were dropped."""


@dataclass(eq=False)
class LoadSeries:
    """A labelled 1D consumption sequence with a fixed sampling period.

    values are kWh per interval, non-negative and finite. sample_minutes
    must divide a day so that a whole number of samples fits per day.
    """

    values: np.ndarray
    sample_minutes: int = 15
    label: int = 0
    id: str = ""

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("series values must be a non-empty 1D sequence")
        if not np.all(np.isfinite(arr)):
            raise ValueError("series values must be finite")
        if np.any(arr < 0):
            raise ValueError("series values must be non-negative")
        if self.sample_minutes <= 0 or MINUTES_PER_DAY % self.sample_minutes != 0:
            raise ValueError(
                f"sample_minutes={self.sample_minutes} must be positive and divide {MINUTES_PER_DAY}"
            )
        arr = arr.copy()
        arr.setflags(write=False)
        self.values = arr

    @property
    def samples_per_day(self) -> int:
        return MINUTES_PER_DAY // self.sample_minutes

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(eq=False)
class Heatmap:
    """A P x D grid of consumption values: row = intra-period sample, column = period."""

    grid: np.ndarray
    label: int = 0
    normalized: bool = False

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=np.float64)
        if g.ndim != 2 or g.shape[0] < 1 or g.shape[1] < 1:
            raise ValueError("heatmap grid must be a 2D array with P >= 1, D >= 1")
        if not np.all(np.isfinite(g)):
            raise ValueError("heatmap grid must be finite")
        if self.normalized and (g.min() < 0.0 or g.max() > 1.0):
            raise ValueError("normalized heatmap must have entries in [0, 1]")
        g = g.copy()
        g.setflags(write=False)
        self.grid = g

    @property
    def P(self) -> int:
        return int(self.grid.shape[0])

    @property
    def D(self) -> int:
        return int(self.grid.shape[1])


@dataclass(frozen=True)
class KernelEconomy:
    """How many samples a 1D kernel must span to see what an m-column 2D kernel sees.

    A feature recurring at the same phase in m consecutive periods of a
    P-sample signal occupies (m - 1) * P + 1 consecutive 1D samples but only
    m rows of one heatmap column window. For an object centred in the grid at
    distance d from the border, the folded view trims 2 * d weights.
    """

    feature_span_periods: int
    period: int
    span_1d: int
    weights_2d: int
    reduction_example_2d: int


def fold(series: LoadSeries, period_samples: int) -> Heatmap:
    """Fold a series into a heatmap with ``period_samples`` rows.

    Column c holds samples [c * P, (c + 1) * P); entry (r, c) is
    values[c * P + r]. A trailing partial period is discarded with a
    TruncationWarning rather than zero-padded, so no fabricated
    consumption enters the grid.
    """
    if period_samples < 1:
        raise ValueError("period_samples must be >= 1")
    n = len(series)
    if n < period_samples:
        raise ValueError("series shorter than one period")
    n_periods = n // period_samples
    dropped = n - n_periods * period_samples
    if dropped:
        warnings.warn(
            f"discarding {dropped} trailing samples that do not fill a period",
            TruncationWarning,
            stacklevel=2,
        )
    grid = series.values[: n_periods * period_samples].reshape(n_periods, period_samples).T
    return Heatmap(grid.copy(), label=series.label, normalized=False)


def unfold(heatmap: Heatmap) -> LoadSeries:
    """Inverse of fold: concatenate the columns back into one sequence.

    The sampling period is reconstructed as 1440 / P when P divides a day,
    else it falls back to per-minute sampling.
    """
    p = heatmap.P
    values = heatmap.grid.T.reshape(-1).copy()
    sample_minutes = MINUTES_PER_DAY // p if MINUTES_PER_DAY % p == 0 else 1
    return LoadSeries(values, sample_minutes=sample_minutes, label=heatmap.label)


def normalize(heatmap: Heatmap) -> Heatmap:
    """Min-max scale one heatmap to [0, 1]; a constant grid maps to all zeros.

    Scaling is per heatmap, not global: households differ by orders of
    magnitude, so each grid is stretched to its own full range.
    """
    g = heatmap.grid
    if not np.all(np.isfinite(g)):
        raise ValueError("cannot normalize a non-finite heatmap")
    lo = g.min()
    hi = g.max()
    if hi > lo:
        out = (g - lo) / (hi - lo)
    else:
        out = np.zeros_like(g)
    return Heatmap(out, label=heatmap.label, normalized=True)


def kernel_economy(feature_span_periods: int, period: int, border_distance: int = 0) -> KernelEconomy:
    """Weight accounting for a cross-period feature, 1D versus folded 2D."""
    if feature_span_periods < 1:
        raise ValueError("feature_span_periods must be >= 1")
    if period < 1:
        raise ValueError("period must be >= 1")
    if border_distance < 0:
        raise ValueError("border_distance must be >= 0")
    return KernelEconomy(
        feature_span_periods=feature_span_periods,
        period=period,
        span_1d=(feature_span_periods - 1) * period + 1,
        weights_2d=feature_span_periods,
        reduction_example_2d=2 * border_distance,
    )
