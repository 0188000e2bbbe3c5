"""Seeded synthetic household consumption heatmaps.

Real smart-meter data of this kind is private, so experiments run on a
parametric stand-in: every household gets a noisy daily base profile with
morning and evening bumps, scaled by a per-household lognormal factor, and
pool households additionally get a rectangular pump block (a daily on-window
across a seasonal range of days in the first half of the columns, skipped on
some days to mimic intermittent operation).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .folding import Heatmap, normalize
from .seeds import derive_seed

NON_POOL, POOL = 0, 1

# Spread of the per-household lognormal size factor.
HOUSEHOLD_SCALE_SIGMA = 0.4
# Width of the morning/evening bumps, as a fraction of the period length.
PEAK_WIDTH_FRACTION = 1.0 / 12.0

_LABEL_STREAM = 1 << 32  # household streams use indices 0..n-1


@dataclass
class SimConfig:
    """Parameters of the synthetic dataset generator.

    P and D must be divisible by 8 so the heatmaps fit the three stride-2
    stages of the downstream generator and critic. The pump season must sit
    in the first half of the columns.
    """

    P: int = 24
    D: int = 64
    n_households: int = 200
    pool_fraction: float = 0.1
    base_mean: float = 1.0
    noise_sigma: float = 0.15
    peak_hours: tuple[int, int] = (7, 19)
    peak_amplitude: float = 1.0
    pump_amplitude: float = 2.0
    pump_daily_window: tuple[int, int] = (9, 17)
    pump_season_window: tuple[int, int] = (4, 28)
    pump_duty: float = 0.85
    seed: int = 0

    def validate(self) -> None:
        if self.P < 8 or self.P % 8 != 0:
            raise ConfigError(f"P={self.P} must be a positive multiple of 8")
        if self.D < 8 or self.D % 8 != 0:
            raise ConfigError(f"D={self.D} must be a positive multiple of 8")
        if self.n_households < 1:
            raise ConfigError("n_households must be positive")
        if not 0.0 < self.pool_fraction < 1.0:
            raise ConfigError("pool_fraction must be in (0, 1)")
        if self.base_mean <= 0:
            raise ConfigError("base_mean must be positive")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if self.peak_amplitude < 0:
            raise ConfigError("peak_amplitude must be >= 0")
        for h in self.peak_hours:
            if not 0 <= h < self.P:
                raise ConfigError(f"peak hour {h} outside [0, {self.P})")
        if self.pump_amplitude <= 0:
            raise ConfigError("pump_amplitude must be positive")
        r0, r1 = self.pump_daily_window
        if not 0 <= r0 < r1 <= self.P:
            raise ConfigError(f"pump_daily_window {self.pump_daily_window} must satisfy 0 <= r0 < r1 <= P")
        c0, c1 = self.pump_season_window
        if not 0 <= c0 < c1 <= self.D // 2:
            raise ConfigError(
                f"pump_season_window {self.pump_season_window} must sit in the first half of columns"
            )
        if not 0.0 < self.pump_duty <= 1.0:
            raise ConfigError("pump_duty must be in (0, 1]")


@dataclass(eq=False)
class LabelledDataset:
    """Heatmaps plus a parallel label vector, with the seed that produced them."""

    items: list[Heatmap]
    labels: np.ndarray
    seed: int = 0

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 1 or len(self.items) != labels.size:
            raise ValueError("items and labels must have matching lengths")
        if self.items:
            p, d = self.items[0].P, self.items[0].D
            for i, (h, lab) in enumerate(zip(self.items, labels)):
                if (h.P, h.D) != (p, d):
                    raise ValueError(f"item {i} has shape {h.P}x{h.D}, expected {p}x{d}")
                if h.label != lab:
                    raise ValueError(f"item {i} label {h.label} disagrees with labels[{i}]={lab}")
        self.labels = labels

    def __len__(self) -> int:
        return len(self.items)

    @property
    def P(self) -> int:
        return self.items[0].P

    @property
    def D(self) -> int:
        return self.items[0].D

    def counts(self) -> dict[int, int]:
        uniq, cnt = np.unique(self.labels, return_counts=True)
        return {int(u): int(c) for u, c in zip(uniq, cnt)}

    def subset(self, indices) -> "LabelledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return LabelledDataset([self.items[i] for i in idx], self.labels[idx], seed=self.seed)

    def class_slice(self, label: int) -> "LabelledDataset":
        return self.subset(np.flatnonzero(self.labels == label))

    def stack(self, dtype=np.float32) -> np.ndarray:
        """All grids as one (N, 1, P, D) array."""
        return np.stack([h.grid for h in self.items])[:, None, :, :].astype(dtype)


def concat_datasets(*parts: LabelledDataset) -> LabelledDataset:
    items: list[Heatmap] = []
    labels: list[np.ndarray] = []
    for p in parts:
        items.extend(p.items)
        labels.append(p.labels)
    return LabelledDataset(items, np.concatenate(labels), seed=parts[0].seed if parts else 0)


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def _base_profile(cfg: SimConfig) -> np.ndarray:
    rows = np.arange(cfg.P, dtype=np.float64)
    width = max(cfg.P * PEAK_WIDTH_FRACTION, 1.0)
    bump = np.zeros(cfg.P)
    for peak in cfg.peak_hours:
        bump += np.exp(-0.5 * ((rows - peak) / width) ** 2)
    return cfg.base_mean * (1.0 + cfg.peak_amplitude * bump)


def simulate_household_raw(cfg: SimConfig, label: int, seed: int) -> tuple[np.ndarray, float]:
    """Unnormalized P x D grid for one household, plus its size factor.

    Draw order is fixed (scale, noise, pump schedule) so results are
    reproducible for a given seed. Values are clamped at zero before the
    pump block is added.
    """
    cfg.validate()
    rng = np.random.default_rng(seed)
    scale = float(np.exp(rng.normal(0.0, HOUSEHOLD_SCALE_SIGMA)))
    base = _base_profile(cfg) * scale
    grid = base[:, None] + rng.normal(0.0, cfg.noise_sigma, size=(cfg.P, cfg.D))
    np.maximum(grid, 0.0, out=grid)
    if label == POOL:
        r0, r1 = cfg.pump_daily_window
        c0, c1 = cfg.pump_season_window
        on = rng.random(c1 - c0) < cfg.pump_duty
        grid[r0:r1, c0:c1][:, on] += cfg.pump_amplitude
    return grid, scale


def simulate_household(cfg: SimConfig, label: int, seed: int) -> Heatmap:
    """One normalized household heatmap with the given class label."""
    grid, _ = simulate_household_raw(cfg, label, seed)
    return normalize(Heatmap(grid, label=label, normalized=False))


def simulate_dataset(cfg: SimConfig) -> LabelledDataset:
    """n_households normalized heatmaps with round(pool_fraction * n) pool labels.

    Household i draws from seed derived as cfg.seed xor i (splitmix-mixed),
    so households are independent streams and the dataset is bit-identical
    for a given config regardless of generation order.
    """
    cfg.validate()
    n = cfg.n_households
    if n < 2:
        raise ConfigError("need at least 2 households")
    n_pool = _round_half_up(cfg.pool_fraction * n)
    label_rng = np.random.default_rng(derive_seed(cfg.seed, _LABEL_STREAM))
    labels = np.zeros(n, dtype=np.int64)
    labels[label_rng.permutation(n)[:n_pool]] = POOL
    items = [simulate_household(cfg, int(labels[i]), derive_seed(cfg.seed, i)) for i in range(n)]
    return LabelledDataset(items, labels, seed=cfg.seed)


def split_dataset(ds: LabelledDataset, train_ratio: float, seed: int) -> tuple[LabelledDataset, LabelledDataset]:
    """Stratified shuffle split preserving per-class proportions to within one item.

    Every class keeps at least one item on each side; a class with fewer
    than two members cannot be split.
    """
    if not 0.0 < train_ratio < 1.0:
        raise ConfigError("train_ratio must be in (0, 1)")
    classes = sorted(set(int(x) for x in ds.labels))
    if len(classes) < 2:
        raise ValueError("cannot stratify: dataset has a single class")
    rng = np.random.default_rng(seed)
    train_idx: list[np.ndarray] = []
    test_idx: list[np.ndarray] = []
    for c in classes:
        idx = np.flatnonzero(ds.labels == c)
        if idx.size < 2:
            raise ValueError(f"cannot stratify: class {c} has fewer than 2 items")
        perm = rng.permutation(idx)
        n_train = int(np.clip(_round_half_up(train_ratio * idx.size), 1, idx.size - 1))
        train_idx.append(perm[:n_train])
        test_idx.append(perm[n_train:])
    train = ds.subset(np.sort(np.concatenate(train_idx)))
    test = ds.subset(np.sort(np.concatenate(test_idx)))
    return train, test
