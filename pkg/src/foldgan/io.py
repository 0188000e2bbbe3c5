"""File formats: dataset CSV, binary checkpoints, run configs, reports, PNGs.

Datasets are CSV so they stay diffable and inspectable at desk scale; values
serialize with repr (shortest round-trip form), so write -> read preserves
every float bit-exactly. Checkpoints are raw little-endian binary so
parameter round-trips are bit-exact by construction.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import CheckpointError, ConfigError
from .folding import Heatmap, LoadSeries
from .loadsim import LabelledDataset, SimConfig
from .tstr import ClassifierConfig, ClassMetrics, EvalReport, TrialResult, _summarize
from .wgan import CHECKPOINT_VERSION, GanArch, GanCheckpoint, GanTrainConfig

DATASET_MAGIC = "# foldgan-dataset v1"
REPORT_MAGIC = "# foldgan-tstr-report v1"
CHECKPOINT_MAGIC = b"FGAN"


# ---------------------------------------------------------------------------
# run configuration: flat "key = value" text


def _default_config() -> dict:
    return {
        "seed": 0,
        "sim.p": 24,
        "sim.d": 64,
        "sim.households": 200,
        "sim.pool_fraction": 0.1,
        "sim.base_mean": 1.0,
        "sim.noise_sigma": 0.15,
        "sim.peak_morning": 7,
        "sim.peak_evening": 19,
        "sim.peak_amplitude": 1.0,
        "sim.pump_amplitude": 2.0,
        "sim.pump_row_start": 9,
        "sim.pump_row_end": 17,
        "sim.pump_col_start": 4,
        "sim.pump_col_end": 28,
        "sim.pump_duty": 0.85,
        "gan.latent_dim": 128,
        "gan.lr": 1e-4,
        "gan.lr_decay": 0.5,
        "gan.batch_size": 4,
        "gan.epochs": 220,
        "gan.lambda_gp": 10.0,
        "gan.n_critic": 5,
        "gan.beta1": 0.5,
        "gan.beta2": 0.9,
        "clf.epochs": 20,
        "clf.batch_size": 16,
        "clf.lr": 1e-3,
        "tstr.trials": 8,
        "tstr.generated_per_class": 256,
        "tstr.train_ratio": 0.5,
        "tstr.top_k": 5,
    }


@dataclass
class RunConfig:
    """Effective configuration: defaults overlaid with explicitly set keys."""

    values: dict = field(default_factory=_default_config)
    explicit: set = field(default_factory=set)

    def __getitem__(self, key):
        return self.values[key]

    def set(self, key, raw):
        if key not in self.values:
            raise ConfigError(f"unknown config key: {key}")
        kind = type(_default_config()[key])
        try:
            self.values[key] = kind(raw) if kind is not int else int(str(raw), 0)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc
        self.explicit.add(key)

    def sim_config(self) -> SimConfig:
        v = self.values
        return SimConfig(
            P=v["sim.p"],
            D=v["sim.d"],
            n_households=v["sim.households"],
            pool_fraction=v["sim.pool_fraction"],
            base_mean=v["sim.base_mean"],
            noise_sigma=v["sim.noise_sigma"],
            peak_hours=(v["sim.peak_morning"], v["sim.peak_evening"]),
            peak_amplitude=v["sim.peak_amplitude"],
            pump_amplitude=v["sim.pump_amplitude"],
            pump_daily_window=(v["sim.pump_row_start"], v["sim.pump_row_end"]),
            pump_season_window=(v["sim.pump_col_start"], v["sim.pump_col_end"]),
            pump_duty=v["sim.pump_duty"],
            seed=v["seed"],
        )

    def gan_config(self) -> GanTrainConfig:
        v = self.values
        return GanTrainConfig(
            lr=v["gan.lr"],
            lr_decay=v["gan.lr_decay"],
            batch_size=v["gan.batch_size"],
            epochs=v["gan.epochs"],
            lambda_gp=v["gan.lambda_gp"],
            n_critic=v["gan.n_critic"],
            beta1=v["gan.beta1"],
            beta2=v["gan.beta2"],
            seed=v["seed"],
        )

    def classifier_config(self) -> ClassifierConfig:
        v = self.values
        return ClassifierConfig(epochs=v["clf.epochs"], batch_size=v["clf.batch_size"], lr=v["clf.lr"])


def parse_config(text: str) -> RunConfig:
    """Parse "key = value" lines; unknown keys are rejected."""
    cfg = RunConfig()
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw_line!r}")
        key, _, value = line.partition("=")
        cfg.set(key.strip(), value.strip())
    return cfg


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config(f.read())


def config_text(cfg: RunConfig) -> str:
    lines = ["# effective configuration"]
    for key in _default_config():
        v = cfg.values[key]
        lines.append(f"{key} = {v!r}" if isinstance(v, float) else f"{key} = {v}")
    return "\n".join(lines) + "\n"


def write_config(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(config_text(cfg))


# ---------------------------------------------------------------------------
# dataset CSV


def write_dataset(ds: LabelledDataset, path) -> None:
    """One row per heatmap: id, label, P, D, then the P*D values in
    column-by-column (period-by-period) order, matching the folding layout."""
    normalized = all(h.normalized for h in ds.items)
    p, d = (ds.P, ds.D) if len(ds) else (0, 0)
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{DATASET_MAGIC} normalized={'true' if normalized else 'false'} seed={ds.seed}\n")
        header = ["id", "label", "P", "D"] + [f"v_{i}" for i in range(p * d)]
        f.write(",".join(header) + "\n")
        for i, h in enumerate(ds.items):
            flat = h.grid.T.reshape(-1).tolist()
            f.write(f"h{i:06d},{h.label},{h.P},{h.D}," + ",".join(repr(v) for v in flat) + "\n")


def read_dataset(path) -> LabelledDataset:
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline().rstrip("\n")
        if not first.startswith(DATASET_MAGIC):
            raise ConfigError(f"{path}: not a dataset file")
        flags = dict(tok.split("=", 1) for tok in first[len(DATASET_MAGIC) :].split() if "=" in tok)
        normalized = flags.get("normalized") == "true"
        seed = int(flags.get("seed", "0"))
        f.readline()  # column header
        items: list[Heatmap] = []
        labels: list[int] = []
        for lineno, line in enumerate(f, start=3):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) < 4:
                raise ConfigError(f"{path}:{lineno}: malformed row")
            label, p, d = int(parts[1]), int(parts[2]), int(parts[3])
            values = np.array(parts[4:], dtype=np.float64)
            if values.size != p * d:
                raise ConfigError(f"{path}:{lineno}: expected {p * d} values, got {values.size}")
            grid = values.reshape(d, p).T
            items.append(Heatmap(grid.copy(), label=label, normalized=normalized))
            labels.append(label)
    return LabelledDataset(items, np.array(labels, dtype=np.int64), seed=seed)


def write_series_csv(series_list: list[LoadSeries], path) -> None:
    """Raw 1D sequences, one per row: id, label, then the values."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("id,label,values...\n")
        for s in series_list:
            f.write(f"{s.id},{s.label}," + ",".join(repr(v) for v in s.values.tolist()) + "\n")


def read_series_csv(path, sample_minutes: int = 15) -> list[LoadSeries]:
    out = []
    with open(path, "r", encoding="utf-8") as f:
        f.readline()
        for line in f:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            out.append(
                LoadSeries(
                    np.array(parts[2:], dtype=np.float64),
                    sample_minutes=sample_minutes,
                    label=int(parts[1]),
                    id=parts[0],
                )
            )
    return out


# ---------------------------------------------------------------------------
# checkpoint binary


def _write_array(f, name: str, arr: np.ndarray) -> None:
    if arr.dtype != np.float32:
        raise CheckpointError(f"checkpoint arrays must be float32, got {arr.dtype} for {name}")
    encoded = name.encode("utf-8")
    f.write(struct.pack("<I", len(encoded)))
    f.write(encoded)
    f.write(struct.pack("<I", arr.ndim))
    f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_exact(f, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return data


def _read_array(f, what: str) -> tuple[str, np.ndarray]:
    (name_len,) = struct.unpack("<I", _read_exact(f, 4, f"{what}: name length"))
    if name_len > 4096:
        raise CheckpointError(f"corrupt checkpoint: implausible name length in {what}")
    name = _read_exact(f, name_len, f"{what}: name").decode("utf-8")
    (rank,) = struct.unpack("<I", _read_exact(f, 4, f"{what} ({name}): rank"))
    if rank > 8:
        raise CheckpointError(f"corrupt checkpoint: implausible rank for layer {name}")
    dims = struct.unpack(f"<{rank}I", _read_exact(f, 4 * rank, f"{what} ({name}): dims"))
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    raw = _read_exact(f, 4 * count, f"{what} ({name}): data")
    arr = np.frombuffer(raw, dtype="<f4").reshape(dims).astype(np.float32)
    return name, arr


def _write_state(f, state: dict[str, np.ndarray]) -> None:
    f.write(struct.pack("<I", len(state)))
    for name, arr in state.items():
        _write_array(f, name, arr)


def _read_state(f, section: str) -> dict[str, np.ndarray]:
    (count,) = struct.unpack("<I", _read_exact(f, 4, f"{section}: array count"))
    state = {}
    for i in range(count):
        name, arr = _read_array(f, f"{section} layer {i}")
        state[name] = arr
    return state


def _write_opt(f, opt: dict) -> None:
    f.write(struct.pack("<Qdddd", opt["t"], opt["lr"], opt["beta1"], opt["beta2"], opt["eps"]))
    _write_state(f, opt["arrays"])


def _read_opt(f, section: str) -> dict:
    t, lr, b1, b2, eps = struct.unpack("<Qdddd", _read_exact(f, 40, f"{section}: scalars"))
    return {"t": t, "lr": lr, "beta1": b1, "beta2": b2, "eps": eps, "arrays": _read_state(f, section)}


def save_checkpoint(ckpt: GanCheckpoint, path) -> None:
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(
            struct.pack(
                "<IIIIiIQ",
                ckpt.format_version,
                ckpt.arch.p,
                ckpt.arch.d,
                ckpt.arch.latent_dim,
                ckpt.class_label,
                ckpt.epochs_completed,
                ckpt.seed & (2**64 - 1),
            )
        )
        _write_state(f, ckpt.generator_state)
        has_opt = ckpt.critic_state is not None
        f.write(struct.pack("<B", 1 if has_opt else 0))
        if has_opt:
            _write_state(f, ckpt.critic_state)
            _write_opt(f, ckpt.gen_opt_state)
            _write_opt(f, ckpt.critic_opt_state)


def load_checkpoint(path) -> GanCheckpoint:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint")
        header_fmt = "<IIIIiIQ"
        version, p, d, latent, label, epochs, seed = struct.unpack(
            header_fmt, _read_exact(f, struct.calcsize(header_fmt), "header")
        )
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        gen_state = _read_state(f, "generator")
        (flag,) = struct.unpack("<B", _read_exact(f, 1, "optimizer flag"))
        critic_state = gen_opt = critic_opt = None
        if flag:
            critic_state = _read_state(f, "critic")
            gen_opt = _read_opt(f, "generator optimizer")
            critic_opt = _read_opt(f, "critic optimizer")
        trailing = f.read(1)
        if trailing:
            raise CheckpointError(f"{path}: trailing bytes after checkpoint payload")
    return GanCheckpoint(
        arch=GanArch(latent_dim=latent, p=p, d=d),
        class_label=label,
        epochs_completed=epochs,
        seed=seed,
        generator_state=gen_state,
        critic_state=critic_state,
        gen_opt_state=gen_opt,
        critic_opt_state=critic_opt,
        format_version=version,
    )


# ---------------------------------------------------------------------------
# evaluation report


def _metrics_csv(m: ClassMetrics) -> str:
    return f"{m.precision!r},{m.recall!r},{m.f1!r}"


def report_text(report: EvalReport, seed: int, top_k_size: int = 5) -> str:
    lines = [REPORT_MAGIC, f"# seed={seed} trials={len(report.trials)} failed={report.n_failed}"]
    lines.append("trial,seed,status,prec0,rec0,f10,prec1,rec1,f11,macro_prec,macro_rec,macro_f1")
    for t in report.trials:
        if t.ok:
            c0, c1 = t.per_class
            lines.append(
                f"{t.index},{t.seed},ok,{_metrics_csv(c0)},{_metrics_csv(c1)},{_metrics_csv(t.macro)}"
            )
        else:
            lines.append(f"{t.index},{t.seed},failed,,,,,,,,,")
    lines.append("[summary]")
    lines.append("metric,min,q1,median,q3,max")
    for name in ("macro_precision", "macro_recall", "macro_f1"):
        if name in report.boxplot:
            s = report.boxplot[name]
            lines.append(f"{name},{s.minimum!r},{s.q1!r},{s.median!r},{s.q3!r},{s.maximum!r}")
    lines.append(f"[top{top_k_size}]")
    lines.append("f1,prec,rec")
    for t in report.top[:top_k_size]:
        lines.append(f"{t.macro.f1:.2f},{t.macro.precision:.2f},{t.macro.recall:.2f}")
    return "\n".join(lines) + "\n"


def write_report(report: EvalReport, path, seed: int, top_k_size: int = 5) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(report_text(report, seed, top_k_size))


def read_report(path, top_k_size: int = 5) -> tuple[EvalReport, dict]:
    """Rebuild a report from its trial rows (summary blocks are recomputed)."""
    with open(path, "r", encoding="utf-8") as f:
        lines = [ln.rstrip("\n") for ln in f]
    if not lines or lines[0] != REPORT_MAGIC:
        raise ConfigError(f"{path}: not a report file")
    meta = dict(tok.split("=", 1) for tok in lines[1].lstrip("# ").split() if "=" in tok)
    trials = []
    for line in lines[3:]:
        if line.startswith("[summary]"):
            break
        parts = line.split(",")
        index, seed, status = int(parts[0]), int(parts[1]), parts[2]
        if status == "ok":
            vals = [float(x) for x in parts[3:12]]
            c0 = ClassMetrics(vals[0], vals[1], vals[2])
            c1 = ClassMetrics(vals[3], vals[4], vals[5])
            macro = ClassMetrics(vals[6], vals[7], vals[8])
            trials.append(TrialResult(index, seed, True, (c0, c1), macro))
        else:
            trials.append(TrialResult(index, seed, False))
    return _summarize(trials, top_k_size), meta


# ---------------------------------------------------------------------------
# rendering


def render_png(heatmap: Heatmap, path) -> None:
    """8-bit grayscale PNG: width = D, height = P, pixel = round(255 * value).

    Row 0 (first intra-period sample) is the top image row; column 0 (first
    period) is the leftmost column.
    """
    if not heatmap.normalized:
        raise ValueError("render requires a normalized heatmap")
    pixels = np.floor(heatmap.grid * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(pixels, mode="L").save(path, format="PNG")
