"""Cross-embedding cosine similarity and the alignment regularizer.

The regularizer pulls each sample's two embeddings together (diagonal of the
similarity matrix toward 1) and pushes mismatched pairs apart (off-diagonal
toward 0), with the two terms averaged over their own entry counts.
"""

from __future__ import annotations

import numpy as np

from .nn import ShapeError, as_matrix


class DegenerateInputError(ValueError):
    """An embedding row has zero norm, so cosine similarity is undefined."""


def _normalize_rows(e: np.ndarray, name: str) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(e, axis=1)
    if np.any(norms == 0.0):
        rows = np.flatnonzero(norms == 0.0).tolist()
        raise DegenerateInputError(f"{name} has all-zero rows at {rows}")
    return e / norms[:, None], norms


def similarity_matrix(e_va: np.ndarray, e_in: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarities: Z[i, j] = cos(e_va[i], e_in[j])."""
    a = as_matrix(e_va, "e_va")
    b = as_matrix(e_in, "e_in")
    if a.shape != b.shape:
        raise ShapeError(f"embedding shapes differ: {a.shape} vs {b.shape}")
    a_hat, _ = _normalize_rows(a, "e_va")
    b_hat, _ = _normalize_rows(b, "e_in")
    return a_hat @ b_hat.T


def contrastive_loss(z: np.ndarray) -> float:
    """Mean squared pull of Z's diagonal to 1 plus push of off-diagonals to 0."""
    z = as_matrix(z, "Z")
    n = z.shape[0]
    if z.shape[1] != n:
        raise ShapeError(f"Z must be square, got shape {z.shape}")
    if n < 2:
        raise ShapeError(f"Z needs at least 2 rows, got {n}")
    diag = np.diagonal(z)
    pull = float(np.sum((diag - 1.0) ** 2)) / n
    push = (float(np.sum(z * z)) - float(np.sum(diag * diag))) / (n * n - n)
    return pull + push


def contrastive_grads(
    e_va: np.ndarray, e_in: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss plus its gradients w.r.t. both embedding matrices."""
    a = as_matrix(e_va, "e_va")
    b = as_matrix(e_in, "e_in")
    if a.shape != b.shape:
        raise ShapeError(f"embedding shapes differ: {a.shape} vs {b.shape}")
    a_hat, a_norm = _normalize_rows(a, "e_va")
    b_hat, b_norm = _normalize_rows(b, "e_in")
    z = a_hat @ b_hat.T
    n = z.shape[0]
    if n < 2:
        raise ShapeError(f"need at least 2 samples, got {n}")
    loss = contrastive_loss(z)
    dz = (2.0 / (n * n - n)) * z
    idx = np.arange(n)
    dz[idx, idx] = (2.0 / n) * (z[idx, idx] - 1.0)
    da_hat = dz @ b_hat
    db_hat = dz.T @ a_hat
    # Back through row normalization: project out the radial component.
    da = (da_hat - np.sum(da_hat * a_hat, axis=1, keepdims=True) * a_hat) / a_norm[:, None]
    db = (db_hat - np.sum(db_hat * b_hat, axis=1, keepdims=True) * b_hat) / b_norm[:, None]
    return loss, da, db
