"""Command line pipeline: simulate, fold, train-gan, generate, evaluate, report, render.

Exit codes: 0 success, 1 usage error, 2 runtime error. Every run that takes
a --config echoes its complete effective configuration next to its outputs,
so outputs can be reproduced bit-identically from the echo alone. The
default seed can be overridden with the FOLDGAN_SEED environment variable;
an explicit config value or --seed flag wins over it.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import io as fio
from .errors import FoldganError
from .folding import fold, normalize
from .loadsim import LabelledDataset, simulate_dataset
from .tstr import oracle_sampler, run_tstr_trials
from .wgan import GanArch, fit_dataset, sample, train_wgan

SEED_ENV_VAR = "FOLDGAN_SEED"
DEFAULT_GENERATED_COUNT = 5000


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="foldgan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("simulate", help="generate a synthetic labelled heatmap dataset")
    p.add_argument("--config", help="run config file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("fold", help="fold raw 1D series into a heatmap dataset")
    p.add_argument("--input", required=True, help="raw series CSV (id,label,v0,v1,...)")
    p.add_argument("--out", required=True, help="output dataset CSV")
    p.add_argument("--period", type=int, help="samples per period (default: one day)")
    p.add_argument("--sample-minutes", type=int, default=15)
    p.add_argument("--no-normalize", action="store_true")

    p = sub.add_parser("train-gan", help="train one per-class generator")
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--class", dest="class_label", type=int, required=True)
    p.add_argument("--out", required=True, help="checkpoint file")
    p.add_argument("--config", help="run config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--fit", choices=("crop", "pad"), default="crop",
                   help="how to coerce dims to multiples of 8 when needed")
    p.add_argument("--generator-only", action="store_true",
                   help="drop critic and optimizer state from the checkpoint")

    p = sub.add_parser("generate", help="sample labelled heatmaps from a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True, help="output dataset CSV")
    p.add_argument("--count", type=int, default=DEFAULT_GENERATED_COUNT)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("evaluate", help="run TSTR trials against a real dataset")
    p.add_argument("--real", required=True, help="real dataset CSV")
    p.add_argument("--config", help="run config file")
    p.add_argument("--out", required=True, help="report file")
    p.add_argument("--trials", type=int, help="override tstr.trials")
    p.add_argument("--seed", type=int)
    p.add_argument("--oracle", action="store_true",
                   help="bypass the GANs and resample real training data (ceiling check)")

    p = sub.add_parser("report", help="print the summary of an existing report")
    p.add_argument("--in", dest="path", required=True)
    p.add_argument("--top-k", type=int, default=5)

    p = sub.add_parser("render", help="render one heatmap as a grayscale PNG")
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--out", required=True, help="PNG path")
    return parser


def _resolve_config(args) -> fio.RunConfig:
    cfg = fio.load_config(args.config) if getattr(args, "config", None) else fio.RunConfig()
    if "seed" not in cfg.explicit:
        env = os.environ.get(SEED_ENV_VAR)
        if env is not None:
            cfg.set("seed", env)
    if getattr(args, "seed", None) is not None:
        cfg.set("seed", args.seed)
    return cfg


def _cmd_simulate(args) -> int:
    cfg = _resolve_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds = simulate_dataset(cfg.sim_config())
    fio.write_dataset(ds, out_dir / "dataset.csv")
    fio.write_config(cfg, out_dir / "config.txt")
    print(f"wrote {len(ds)} heatmaps ({ds.counts()}) to {out_dir / 'dataset.csv'}")
    return 0


def _cmd_fold(args) -> int:
    series = fio.read_series_csv(args.input, sample_minutes=args.sample_minutes)
    if not series:
        raise FoldganError(f"{args.input}: no series rows")
    period = args.period or series[0].samples_per_day
    items = []
    for s in series:
        h = fold(s, period)
        items.append(h if args.no_normalize else normalize(h))
    ds = LabelledDataset(items, np.array([h.label for h in items], dtype=np.int64))
    fio.write_dataset(ds, args.out)
    print(f"folded {len(items)} series at period {period} into {args.out}")
    return 0


def _cmd_train_gan(args) -> int:
    cfg = _resolve_config(args)
    ds = fio.read_dataset(args.data)
    class_data = ds.class_slice(args.class_label)
    if len(class_data) == 0:
        raise FoldganError(f"no items with label {args.class_label} in {args.data}")
    if class_data.P % 8 or class_data.D % 8:
        class_data = fit_dataset(class_data, mode=args.fit)
    gan_cfg = cfg.gan_config()
    ckpt, log = train_wgan(class_data, gan_cfg, GanArch(cfg["gan.latent_dim"], class_data.P, class_data.D))
    if args.generator_only:
        ckpt = ckpt.without_optimizer()
    fio.save_checkpoint(ckpt, args.out)
    with open(str(args.out) + ".log", "w", encoding="utf-8") as f:
        f.write(log.to_text())
    fio.write_config(cfg, str(args.out) + ".config")
    print(f"trained class {args.class_label} for {ckpt.epochs_completed} epochs -> {args.out}")
    return 0


def _cmd_generate(args) -> int:
    ckpt = fio.load_checkpoint(args.ckpt)
    seed = args.seed
    if seed is None:
        seed = int(os.environ.get(SEED_ENV_VAR, "0"))
    ds = sample(ckpt, args.count, seed)
    fio.write_dataset(ds, args.out)
    print(f"sampled {args.count} heatmaps with label {ckpt.class_label} -> {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _resolve_config(args)
    real = fio.read_dataset(args.real)
    n_trials = args.trials if args.trials is not None else cfg["tstr.trials"]
    report = run_tstr_trials(
        real,
        cfg.gan_config(),
        n_trials,
        cfg["tstr.generated_per_class"],
        cfg["seed"],
        clf_cfg=cfg.classifier_config(),
        train_ratio=cfg["tstr.train_ratio"],
        latent_dim=cfg["gan.latent_dim"],
        sample_fn=oracle_sampler if args.oracle else None,
        top_k_size=cfg["tstr.top_k"],
    )
    fio.write_report(report, args.out, cfg["seed"], cfg["tstr.top_k"])
    fio.write_config(cfg, str(args.out) + ".config")
    ok = report.ok_trials()
    med = np.median([t.macro.f1 for t in ok]) if ok else float("nan")
    print(f"{len(ok)}/{len(report.trials)} trials ok, median macro F1 {med:.3f} -> {args.out}")
    return 0


def _cmd_report(args) -> int:
    report, meta = fio.read_report(args.path, top_k_size=args.top_k)
    print(fio.report_text(report, int(meta.get("seed", "0")), args.top_k), end="")
    return 0


def _cmd_render(args) -> int:
    ds = fio.read_dataset(args.data)
    if not 0 <= args.index < len(ds):
        raise FoldganError(f"index {args.index} out of range for {len(ds)} heatmaps")
    fio.render_png(ds.items[args.index], args.out)
    print(f"rendered heatmap {args.index} (label {ds.items[args.index].label}) -> {args.out}")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "fold": _cmd_fold,
    "train-gan": _cmd_train_gan,
    "generate": _cmd_generate,
    "evaluate": _cmd_evaluate,
    "report": _cmd_report,
    "render": _cmd_render,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except (FoldganError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
