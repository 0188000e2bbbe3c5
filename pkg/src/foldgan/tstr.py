"""Train-synthetic test-real scoring of the per-class generators.

Each trial splits the real dataset, trains one GAN per class on the
training half, samples a labelled synthetic training set from the two
generators, trains a small classifier CNN on the synthetic data only, and
evaluates it on the held-out real half. Per-class and macro
precision/recall/F1 are collected across independent trials; accuracy is
deliberately not reported because the pool class is heavily
under-represented.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, TrainingDiverged
from .loadsim import LabelledDataset, concat_datasets, split_dataset
from .nn import Adam, Conv2d, Dense, Flatten, LeakyReLU, Sequential, Softmax, xent_loss
from .seeds import derive_seed
from .wgan import GanArch, GanTrainConfig, sample, train_wgan

LEAK = 0.2


@dataclass
class ClassifierConfig:
    epochs: int = 20
    batch_size: int = 16
    lr: float = 1e-3

    def validate(self):
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ConfigError("classifier config needs epochs >= 0, batch_size >= 1, lr > 0")


@dataclass(frozen=True)
class ConfusionMatrix:
    """2x2 counts indexed (true class, predicted class)."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.shape != (2, 2) or (c < 0).any():
            raise ValueError("confusion matrix must be 2x2 with non-negative counts")
        object.__setattr__(self, "counts", c)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float


@dataclass
class TrialResult:
    index: int
    seed: int
    ok: bool
    per_class: tuple[ClassMetrics, ClassMetrics] | None = None
    macro: ClassMetrics | None = None
    note: str = ""


@dataclass(frozen=True)
class FiveNumber:
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float


@dataclass
class EvalReport:
    trials: list[TrialResult]
    boxplot: dict[str, FiveNumber] = field(default_factory=dict)
    top: list[TrialResult] = field(default_factory=list)

    @property
    def n_failed(self) -> int:
        return sum(1 for t in self.trials if not t.ok)

    def ok_trials(self) -> list[TrialResult]:
        return [t for t in self.trials if t.ok]


def build_classifier(p: int, d: int, seed: int) -> Sequential:
    """Small CNN: two stride-2 convolutions, one hidden dense layer, softmax."""
    if p < 8 or d < 8:
        raise ConfigError(f"classifier needs at least 8x8 heatmaps, got {p}x{d}")
    rng = np.random.default_rng(seed)
    flat = 32 * -(-p // 4) * -(-d // 4)
    return Sequential(
        [
            ("conv1", Conv2d(1, 16, (5, 5), (2, 2), "same", rng=rng)),
            ("lrelu1", LeakyReLU(LEAK)),
            ("conv2", Conv2d(16, 32, (5, 5), (2, 2), "same", rng=rng)),
            ("lrelu2", LeakyReLU(LEAK)),
            ("flatten", Flatten()),
            ("dense1", Dense(flat, 128, rng=rng)),
            ("lrelu3", LeakyReLU(LEAK)),
            ("dense2", Dense(128, 2, rng=rng)),
            ("softmax", Softmax()),
        ]
    )


def train_classifier(train_set: LabelledDataset, cfg: ClassifierConfig | None = None, seed: int = 0) -> Sequential:
    """Cross-entropy + Adam training on heatmap batches; deterministic per seed."""
    cfg = cfg or ClassifierConfig()
    cfg.validate()
    if len(set(int(x) for x in train_set.labels)) < 2:
        raise ValueError("degenerate training: need both classes in the training set")
    net = build_classifier(train_set.P, train_set.D, derive_seed(seed, 1)).fuse_storage()
    adam = Adam(net.opt_params(), lr=cfg.lr)
    rng = np.random.default_rng(derive_seed(seed, 2))
    x_all = train_set.stack(np.float32)
    y_all = train_set.labels
    n = x_all.shape[0]
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            probs = net.forward(x_all[idx], train=True)
            _, dprobs = xent_loss(probs, y_all[idx])
            net.zero_grad()
            net.backward(dprobs, input_grad=False)
            adam.step(net.opt_params(), net.opt_grads())
    return net


def predict(model: Sequential, ds: LabelledDataset, batch_size: int = 256) -> np.ndarray:
    """Argmax class per item; exact probability ties resolve to class 0."""
    x_all = ds.stack(np.float32)
    out = []
    for start in range(0, x_all.shape[0], batch_size):
        probs = model.forward(x_all[start : start + batch_size], train=False)
        out.append(np.argmax(probs, axis=1))
    return np.concatenate(out)


def evaluate(model: Sequential, test_set: LabelledDataset) -> ConfusionMatrix:
    if len(test_set) == 0:
        raise ValueError("evaluation set is empty")
    preds = predict(model, test_set)
    counts = np.zeros((2, 2), dtype=np.int64)
    for t, p in zip(test_set.labels, preds):
        counts[int(t), int(p)] += 1
    return ConfusionMatrix(counts)


def class_metrics(cm: ConfusionMatrix) -> tuple[ClassMetrics, ClassMetrics]:
    """Per-class precision/recall/F1 with the zero-denominator convention 0."""
    out = []
    c = cm.counts
    for k in (0, 1):
        tp = c[k, k]
        fp = c[1 - k, k]
        fn = c[k, 1 - k]
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        out.append(ClassMetrics(float(precision), float(recall), float(f1)))
    return out[0], out[1]


def macro_average(per_class: tuple[ClassMetrics, ClassMetrics]) -> ClassMetrics:
    a, b = per_class
    return ClassMetrics(
        precision=(a.precision + b.precision) / 2.0,
        recall=(a.recall + b.recall) / 2.0,
        f1=(a.f1 + b.f1) / 2.0,
    )


def boxplot_stats(values) -> FiveNumber:
    """Five-number summary with Tukey hinges (median-inclusive halves)."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        raise ValueError("boxplot_stats needs at least one value")
    n = v.size
    lower = v[: (n + 1) // 2]
    upper = v[n // 2 :]
    return FiveNumber(
        minimum=float(v[0]),
        q1=float(np.median(lower)),
        median=float(np.median(v)),
        q3=float(np.median(upper)),
        maximum=float(v[-1]),
    )


def top_k(report: EvalReport, k: int = 5) -> list[tuple[float, float, float]]:
    """Best macro (F1, precision, recall) rows, F1 descending, ties by precision then recall."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rows = [(t.macro.f1, t.macro.precision, t.macro.recall) for t in report.ok_trials()]
    rows.sort(key=lambda r: (-r[0], -r[1], -r[2]))
    return rows[:k]


def oracle_sampler(class_data: LabelledDataset, label: int, n: int, seed: int) -> LabelledDataset:
    """Test hook standing in for a perfect generator: resample real training
    heatmaps with replacement. Separates simulator failures from GAN failures."""
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(class_data), size=n)
    ds = class_data.subset(idx)
    return LabelledDataset(ds.items, np.full(n, label, dtype=np.int64), seed=seed if isinstance(seed, int) else 0)


def _summarize(trials: list[TrialResult], k: int) -> EvalReport:
    report = EvalReport(trials=trials)
    ok = report.ok_trials()
    if ok:
        for name, pick in (
            ("macro_precision", lambda t: t.macro.precision),
            ("macro_recall", lambda t: t.macro.recall),
            ("macro_f1", lambda t: t.macro.f1),
        ):
            report.boxplot[name] = boxplot_stats([pick(t) for t in ok])
        order = sorted(ok, key=lambda t: (-t.macro.f1, -t.macro.precision, -t.macro.recall))
        report.top = order[:k]
    return report


def run_tstr_trial(
    real: LabelledDataset,
    gan_cfg: GanTrainConfig,
    n_generated_per_class: int,
    trial_seed: int,
    *,
    clf_cfg: ClassifierConfig | None = None,
    train_ratio: float = 0.5,
    latent_dim: int = 128,
    sample_fn=None,
) -> tuple[tuple[ClassMetrics, ClassMetrics], ClassMetrics]:
    """One independent trial; returns (per-class metrics, macro metrics)."""
    gan_train, eval_set = split_dataset(real, train_ratio, derive_seed(trial_seed, 1))
    parts = []
    for label in (0, 1):
        class_slice = gan_train.class_slice(label)
        gen_seed = derive_seed(trial_seed, 10 + label)
        if sample_fn is not None:
            parts.append(sample_fn(class_slice, label, n_generated_per_class, gen_seed))
        else:
            arch = GanArch(latent_dim=latent_dim, p=real.P, d=real.D)
            ckpt, _ = train_wgan(class_slice, replace(gan_cfg, seed=gen_seed), arch)
            parts.append(sample(ckpt, n_generated_per_class, derive_seed(trial_seed, 20 + label)))
    synthetic = concat_datasets(*parts)
    model = train_classifier(synthetic, clf_cfg, seed=derive_seed(trial_seed, 30))
    cm = evaluate(model, eval_set)
    per_class = class_metrics(cm)
    return per_class, macro_average(per_class)


def run_tstr_trials(
    real: LabelledDataset,
    gan_cfg: GanTrainConfig,
    n_trials: int,
    n_generated_per_class: int,
    seed: int,
    *,
    clf_cfg: ClassifierConfig | None = None,
    train_ratio: float = 0.5,
    latent_dim: int = 128,
    sample_fn=None,
    trial_seeds=None,
    top_k_size: int = 5,
) -> EvalReport:
    """n_trials independent TSTR rounds aggregated into a report.

    Trial i derives its own seed from ``seed`` (or uses trial_seeds[i]), so
    trials are order-independent. A diverged trial is recorded as failed and
    excluded from the aggregates.
    """
    if n_trials < 1:
        raise ConfigError("n_trials must be >= 1")
    counts = real.counts()
    if set(counts) != {0, 1}:
        raise ConfigError(f"real dataset must contain exactly classes 0 and 1, got {sorted(counts)}")
    if trial_seeds is None:
        trial_seeds = [derive_seed(seed, 1000 + i) for i in range(n_trials)]
    elif len(trial_seeds) != n_trials:
        raise ConfigError("trial_seeds must have n_trials entries")
    trials = []
    for i in range(n_trials):
        try:
            per_class, macro = run_tstr_trial(
                real,
                gan_cfg,
                n_generated_per_class,
                trial_seeds[i],
                clf_cfg=clf_cfg,
                train_ratio=train_ratio,
                latent_dim=latent_dim,
                sample_fn=sample_fn,
            )
            trials.append(TrialResult(i, trial_seeds[i], True, per_class, macro))
        except TrainingDiverged as exc:
            trials.append(TrialResult(i, trial_seeds[i], False, note=str(exc)))
    return _summarize(trials, top_k_size)
