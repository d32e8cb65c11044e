"""Figure rendering for the CLI report paths.

Each function writes one PNG next to the delimited output it illustrates.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .pipeline import AblationRow, SweepRow, TrainHistory

METRIC_NAMES = ("acc", "nmi", "purity")


def plot_training_curves(history: TrainHistory, path: str | Path) -> None:
    """Loss components per epoch, with clustering metrics when available."""
    records = history.records
    if not records:
        raise ValueError("history has no epochs to plot")
    epochs = [r.epoch for r in records]
    have_metrics = records[0].acc is not None
    n_panels = 2 if have_metrics else 1
    fig, axes = plt.subplots(1, n_panels, figsize=(6 * n_panels, 4.5), squeeze=False)
    ax = axes[0][0]
    for name, series in (
        ("total", [r.total for r in records]),
        ("reconstruction", [r.l_r for r in records]),
        ("variational", [r.l_elbo for r in records]),
        ("contrastive", [r.l_c for r in records]),
    ):
        ax.plot(epochs, series, label=name)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title("training loss")
    ax.legend()
    if have_metrics:
        ax = axes[0][1]
        for name, series in (
            ("acc", [r.acc for r in records]),
            ("nmi", [r.nmi for r in records]),
            ("purity", [r.purity for r in records]),
        ):
            ax.plot(epochs, series, label=name)
        ax.set_xlabel("epoch")
        ax.set_ylabel("score")
        ax.set_ylim(0.0, 1.05)
        ax.set_title("clustering quality")
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_ratio_sweep(rows: list[SweepRow], path: str | Path) -> None:
    """Metric curves against the aligned-sample ratio."""
    if not rows:
        raise ValueError("no sweep rows to plot")
    ratios = [row.ratio for row in rows]
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for name in METRIC_NAMES:
        ax.plot(
            ratios,
            [getattr(row.report, name) for row in rows],
            marker="o",
            label=name,
        )
    ax.set_xlabel("aligned ratio")
    ax.set_ylabel("score")
    ax.set_ylim(0.0, 1.05)
    ax.set_title("clustering quality vs alignment ratio")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_ablation(rows: list[AblationRow], path: str | Path) -> None:
    """Grouped bars: one cluster of metric bars per ablation mode."""
    if not rows:
        raise ValueError("no ablation rows to plot")
    x = np.arange(len(rows))
    width = 0.25
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for j, name in enumerate(METRIC_NAMES):
        ax.bar(
            x + (j - 1) * width,
            [getattr(row.report, name) for row in rows],
            width,
            label=name,
        )
    ax.set_xticks(x)
    ax.set_xticklabels([row.mode for row in rows])
    ax.set_ylabel("score")
    ax.set_ylim(0.0, 1.05)
    ax.set_title("ablation comparison")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
