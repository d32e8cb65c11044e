"""Command-line interface.

Subcommands cover the whole workflow: generate or misalign datasets, train,
infer, evaluate, and run the ratio-sweep and ablation harnesses. Report
paths write figures next to their delimited outputs.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import pipeline, report
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ABLATION_MODES, load_config
from .data import (
    inject_misalignment,
    load_dataset,
    load_labels,
    make_synthetic,
    save_alignment,
    save_dataset,
)
from .metrics import metric_report


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated integers, got {text!r}"
        ) from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated floats, got {text!r}"
        ) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="causalmvc",
        description="Causal multi-view clustering on partially aligned data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic aligned dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--n", type=int, required=True, help="number of samples")
    p.add_argument("--k", type=int, required=True, help="number of clusters")
    p.add_argument("--views", type=int, required=True, help="number of views")
    p.add_argument(
        "--dims", type=_int_list, required=True, help="per-view widths, e.g. 10,10,10"
    )
    p.add_argument("--separation", type=float, default=10.0, help="center spread")
    p.add_argument("--noise", type=float, default=0.5, help="within-cluster spread")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("inject", help="misalign a dataset at a given ratio")
    p.add_argument("--data", required=True, help="input dataset directory")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--ratio", type=float, required=True, help="aligned fraction")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train a model on a dataset")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--config", required=True, help="key = value config file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument(
        "--ablation",
        choices=ABLATION_MODES,
        help="override the config's ablation mode",
    )

    p = sub.add_parser("infer", help="cluster a dataset with a trained model")
    p.add_argument("--checkpoint", required=True, help="model checkpoint file")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("eval", help="score predictions against labels")
    p.add_argument("--pred", required=True, help="one predicted label per line")
    p.add_argument("--labels", required=True, help="one true label per line")

    p = sub.add_parser("sweep", help="misalign, retrain, and score per ratio")
    p.add_argument("--data", required=True, help="dataset directory with labels")
    p.add_argument("--config", required=True, help="key = value config file")
    p.add_argument(
        "--ratios", type=_float_list, required=True, help="e.g. 0.5,0.7,0.9"
    )
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("ablate", help="train and score every ablation mode")
    p.add_argument("--data", required=True, help="dataset directory with labels")
    p.add_argument("--config", required=True, help="key = value config file")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser(
        "export-embeddings", help="write mean embeddings and labels as CSV"
    )
    p.add_argument("--checkpoint", required=True, help="model checkpoint file")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="output CSV file")

    return parser


def _cmd_synth(args) -> int:
    dataset = make_synthetic(
        n=args.n,
        k=args.k,
        n_views=args.views,
        dims=args.dims,
        separation=args.separation,
        noise=args.noise,
        seed=args.seed,
    )
    save_dataset(dataset, args.out)
    print(f"wrote {dataset.n_views} views x {dataset.n_samples} samples to {args.out}")
    return 0


def _cmd_inject(args) -> int:
    dataset = load_dataset(args.data)
    misaligned, amap = inject_misalignment(dataset, args.ratio, args.seed)
    out = Path(args.out)
    save_dataset(misaligned, out)
    save_alignment(amap, out / "alignment.json")
    kept = int(amap.aligned_mask.sum())
    print(f"wrote misaligned dataset to {out} ({kept}/{dataset.n_samples} rows aligned)")
    return 0


def _cmd_train(args) -> int:
    dataset = load_dataset(args.data)
    config = load_config(args.config)
    if args.ablation is not None:
        config = replace(config, ablation=args.ablation)
    state, history = pipeline.train(dataset, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(state, out / "model.ckpt")
    pipeline.write_history(out / "history.csv", history)
    pipeline.write_assignments(out / "assignments.txt", history.final_assignment)
    if dataset.labels is not None:
        rep = pipeline.evaluate(history.final_assignment, dataset.labels)
        pipeline.write_metrics(out / "metrics.txt", rep, config)
        print(f"acc={rep.acc:.4f} nmi={rep.nmi:.4f} purity={rep.purity:.4f}")
    if history.records:
        report.plot_training_curves(history, out / "training_curves.png")
    print(f"wrote model and run outputs to {out}")
    return 0


def _cmd_infer(args) -> int:
    state = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.data)
    assignment = pipeline.infer(state, dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pipeline.write_assignments(out / "assignments.txt", assignment)
    if dataset.labels is not None:
        rep = pipeline.evaluate(assignment, dataset.labels)
        pipeline.write_metrics(out / "metrics.txt", rep, state.config)
        print(f"acc={rep.acc:.4f} nmi={rep.nmi:.4f} purity={rep.purity:.4f}")
    print(f"wrote assignments to {out}")
    return 0


def _cmd_eval(args) -> int:
    pred = load_labels(args.pred)
    true = load_labels(args.labels)
    rep = metric_report(true, pred)
    print(f"acc = {rep.acc:.6f}")
    print(f"nmi = {rep.nmi:.6f}")
    print(f"purity = {rep.purity:.6f}")
    print(f"n_samples = {rep.n_samples}")
    return 0


def _cmd_sweep(args) -> int:
    dataset = load_dataset(args.data)
    config = load_config(args.config)
    rows = pipeline.ratio_sweep(dataset, args.ratios, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pipeline.write_sweep(out / "sweep.csv", rows)
    report.plot_ratio_sweep(rows, out / "sweep.png")
    for row in rows:
        print(
            f"ratio={row.ratio:g} acc={row.report.acc:.4f} "
            f"nmi={row.report.nmi:.4f} purity={row.report.purity:.4f}"
        )
    print(f"wrote sweep outputs to {out}")
    return 0


def _cmd_ablate(args) -> int:
    dataset = load_dataset(args.data)
    config = load_config(args.config)
    rows = pipeline.ablate(dataset, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pipeline.write_ablation(out / "ablation.csv", rows)
    report.plot_ablation(rows, out / "ablation.png")
    for row in rows:
        print(
            f"mode={row.mode} acc={row.report.acc:.4f} "
            f"nmi={row.report.nmi:.4f} purity={row.report.purity:.4f}"
        )
    print(f"wrote ablation outputs to {out}")
    return 0


def _cmd_export(args) -> int:
    dataset = load_dataset(args.data)
    pipeline.export_embeddings(args.checkpoint, dataset, args.out)
    print(f"wrote embeddings to {args.out}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "inject": _cmd_inject,
    "train": _cmd_train,
    "infer": _cmd_infer,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
    "ablate": _cmd_ablate,
    "export-embeddings": _cmd_export,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
