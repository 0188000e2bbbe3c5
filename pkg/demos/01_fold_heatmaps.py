"""Folding periodic 1D series into heatmaps, and why it pays off.

A smart-meter style signal sampled every 15 minutes repeats daily: 96
samples per period. Folding puts each day into one column, so a feature
that recurs at the same time of day across neighbouring days becomes a
small 2D patch instead of a huge 1D span.
"""
from pathlib import Path

import numpy as np

from foldgan import LoadSeries, fold, kernel_economy, normalize, unfold
from foldgan.io import render_png

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)


def main():
    rng = np.random.default_rng(7)

    # One synthetic "year": 20 days of 96 quarter-hour readings with a
    # morning bump and a noisy base load.
    t = np.arange(96 * 20)
    time_of_day = t % 96
    base = 0.4 + 0.8 * np.exp(-0.5 * ((time_of_day - 30) / 6.0) ** 2)
    values = np.clip(base + rng.normal(0, 0.05, t.size), 0, None)
    series = LoadSeries(values, sample_minutes=15, label=0, id="demo-house")

    heatmap = fold(series, series.samples_per_day)
    print(f"folded {len(series)} samples into a {heatmap.P}x{heatmap.D} heatmap")

    back = unfold(heatmap)
    print("unfold inverts fold exactly:", bool(np.array_equal(back.values, series.values)))

    normalized = normalize(heatmap)
    print(f"normalized range: [{normalized.grid.min():.2f}, {normalized.grid.max():.2f}]")

    png = OUT / "folded_day_columns.png"
    render_png(normalized, png)
    print(f"wrote {png} (width = days, height = time of day)")

    # How many weights would a 1D kernel need to see a feature spanning
    # m consecutive days at the same time of day?
    for m in (2, 3, 5):
        ke = kernel_economy(m, 96)
        print(
            f"feature across {m} days: 1D span {ke.span_1d} samples"
            f" vs {ke.weights_2d} rows of one heatmap column window"
        )
    ke = kernel_economy(3, 96, border_distance=4)
    print(f"centred object at border distance 4: folded view trims {ke.reduction_example_2d} weights")


if __name__ == "__main__":
    main()
