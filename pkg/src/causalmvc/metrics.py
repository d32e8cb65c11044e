"""Clustering quality metrics: Hungarian-matched accuracy, NMI, purity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .nn import ShapeError


@dataclass
class MetricReport:
    """Scores plus the sizes they were computed over."""

    acc: float
    nmi: float
    purity: float
    n_samples: int
    k_true: int
    k_pred: int


def _as_labels(values: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ShapeError(f"{name} is empty")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.round(arr)):
            raise ValueError(f"{name} must contain integers")
    arr = arr.astype(np.int64)
    if arr.min() < 0:
        raise ValueError(f"{name} must be >= 0, found {arr.min()}")
    return arr


def _contingency(true: np.ndarray, pred: np.ndarray) -> np.ndarray:
    true = _as_labels(true, "true labels")
    pred = _as_labels(pred, "predicted labels")
    if true.shape != pred.shape:
        raise ShapeError(
            f"label vectors differ in length: {true.shape[0]} vs {pred.shape[0]}"
        )
    table = np.zeros((int(true.max()) + 1, int(pred.max()) + 1), dtype=np.int64)
    np.add.at(table, (true, pred), 1)
    return table


def hungarian_min_cost(cost: np.ndarray) -> tuple[np.ndarray, float]:
    """Minimum-cost perfect matching on a square cost matrix.

    Returns (assignment, total) where assignment[i] is the column matched to
    row i.
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ShapeError(f"cost matrix must be square, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix contains non-finite entries")
    rows, cols = linear_sum_assignment(c)
    assignment = np.empty(c.shape[0], dtype=np.int64)
    assignment[rows] = cols
    return assignment, float(c[rows, cols].sum())


def acc(true: np.ndarray, pred: np.ndarray) -> float:
    """Clustering accuracy under the best one-to-one cluster relabeling."""
    table = _contingency(true, pred)
    size = max(table.shape)
    padded = np.zeros((size, size), dtype=np.float64)
    padded[: table.shape[0], : table.shape[1]] = table
    # Minimizing (max - counts) maximizes the matched counts.
    assignment, _ = hungarian_min_cost(padded.max() - padded)
    matched = padded[np.arange(size), assignment].sum()
    return float(matched / table.sum())


def nmi(true: np.ndarray, pred: np.ndarray) -> float:
    """Normalized mutual information with the geometric-mean normalizer.

    Degenerate cases: 1.0 when both labelings are constant, 0.0 when exactly
    one is.
    """
    table = _contingency(true, pred).astype(np.float64)
    n = table.sum()
    pt = table.sum(axis=1) / n
    pp = table.sum(axis=0) / n
    h_true = -float(np.sum(pt[pt > 0.0] * np.log(pt[pt > 0.0])))
    h_pred = -float(np.sum(pp[pp > 0.0] * np.log(pp[pp > 0.0])))
    if h_true == 0.0 and h_pred == 0.0:
        return 1.0
    if h_true == 0.0 or h_pred == 0.0:
        return 0.0
    joint = table / n
    outer = np.outer(pt, pp)
    nz = joint > 0.0
    mi = float(np.sum(joint[nz] * np.log(joint[nz] / outer[nz])))
    return mi / np.sqrt(h_true * h_pred)


def purity(true: np.ndarray, pred: np.ndarray) -> float:
    """Fraction of samples in the majority true class of their cluster."""
    table = _contingency(true, pred)
    return float(table.max(axis=0).sum() / table.sum())


def metric_report(true: np.ndarray, pred: np.ndarray) -> MetricReport:
    """Compute all metrics at once over a pair of labelings."""
    table = _contingency(true, pred)
    n = int(table.sum())
    size = max(table.shape)
    padded = np.zeros((size, size), dtype=np.float64)
    padded[: table.shape[0], : table.shape[1]] = table
    assignment, _ = hungarian_min_cost(padded.max() - padded)
    matched = float(padded[np.arange(size), assignment].sum())
    return MetricReport(
        acc=matched / n,
        nmi=nmi(true, pred),
        purity=purity(true, pred),
        n_samples=n,
        k_true=table.shape[0],
        k_pred=table.shape[1],
    )
