"""Per-view autoencoders, k-means, and the warm-start stage.

Warm start trains the autoencoders on reconstruction alone, concatenates the
per-view latents into the variant features, and runs k-means on them to get
the initial hard partition used as the clustering target downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import MultiViewDataset
from .nn import (
    AdamState,
    Mlp,
    ShapeError,
    adam_step,
    as_matrix,
    glorot_mlp,
    mlp_backward,
    mlp_forward,
)

HIDDEN_WIDTH = 64

SOFT_ROW_SUM_TOL = 1e-6


@dataclass
class ViewAutoencoder:
    """Encoder/decoder pair for one view; latents feed the causal model."""

    encoder: Mlp
    decoder: Mlp

    def __post_init__(self) -> None:
        if self.encoder.out_dim != self.decoder.in_dim:
            raise ShapeError(
                f"encoder emits {self.encoder.out_dim} dims, decoder expects "
                f"{self.decoder.in_dim}"
            )
        if self.encoder.in_dim != self.decoder.out_dim:
            raise ShapeError(
                f"decoder emits {self.decoder.out_dim} dims, encoder expects "
                f"{self.encoder.in_dim}"
            )

    @property
    def input_dim(self) -> int:
        return self.encoder.in_dim

    @property
    def latent_dim(self) -> int:
        return self.encoder.out_dim


def new_autoencoder(
    input_dim: int, latent_dim: int, rng: np.random.Generator, hidden: int = HIDDEN_WIDTH
) -> ViewAutoencoder:
    """Glorot-initialized relu-hidden autoencoder for one view."""
    encoder = glorot_mlp([input_dim, hidden, latent_dim], ["relu", "identity"], rng)
    decoder = glorot_mlp([latent_dim, hidden, input_dim], ["relu", "identity"], rng)
    return ViewAutoencoder(encoder=encoder, decoder=decoder)


def ae_forward(view: np.ndarray, ae: ViewAutoencoder) -> tuple[np.ndarray, np.ndarray]:
    """Encode then decode a batch, returning (latent, reconstruction)."""
    latent, _ = mlp_forward(view, ae.encoder)
    recon, _ = mlp_forward(latent, ae.decoder)
    return latent, recon


def reconstruction_loss(views: list[np.ndarray], recons: list[np.ndarray]) -> float:
    """Sum of squared Frobenius reconstruction errors over all views."""
    if len(views) != len(recons):
        raise ShapeError(f"got {len(views)} views but {len(recons)} reconstructions")
    total = 0.0
    for i, (view, recon) in enumerate(zip(views, recons)):
        v = as_matrix(view, f"view {i}")
        r = as_matrix(recon, f"reconstruction {i}")
        if v.shape != r.shape:
            raise ShapeError(
                f"view {i} shape {v.shape} does not match reconstruction {r.shape}"
            )
        diff = r - v
        total += float(np.sum(diff * diff))
    return total


def variant_features(
    dataset: MultiViewDataset, aes: list[ViewAutoencoder]
) -> np.ndarray:
    """Concatenate per-view latents in view order into an n x (V*h) matrix."""
    if len(aes) != dataset.n_views:
        raise ShapeError(
            f"got {len(aes)} autoencoders for {dataset.n_views} views"
        )
    latents = []
    for v, (view, ae) in enumerate(zip(dataset.views, aes)):
        if view.shape[1] != ae.input_dim:
            raise ShapeError(
                f"view {v} has {view.shape[1]} features, autoencoder expects "
                f"{ae.input_dim}"
            )
        latent, _ = mlp_forward(view, ae.encoder)
        latents.append(latent)
    return np.hstack(latents)


@dataclass
class ClusterAssignment:
    """Row-stochastic soft assignments with their argmax hard labels."""

    soft: np.ndarray
    hard: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self.soft = as_matrix(self.soft, "soft assignments")
        if self.soft.shape[1] < 1:
            raise ShapeError("soft assignments need at least one column")
        sums = self.soft.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > SOFT_ROW_SUM_TOL):
            worst = int(np.argmax(np.abs(sums - 1.0)))
            raise ValueError(
                f"soft assignment rows must sum to 1 within {SOFT_ROW_SUM_TOL}; "
                f"row {worst} sums to {sums[worst]}"
            )
        if np.any(self.soft < 0.0):
            raise ValueError("soft assignments must be non-negative")
        argmax = self.soft.argmax(axis=1).astype(np.int64)
        if self.hard is None:
            self.hard = argmax
        else:
            self.hard = np.asarray(self.hard, dtype=np.int64)
            if not np.array_equal(self.hard, argmax):
                raise ValueError("hard labels must be the argmax of soft rows")

    @property
    def n_samples(self) -> int:
        return self.soft.shape[0]

    @property
    def n_clusters(self) -> int:
        return self.soft.shape[1]

    @classmethod
    def from_hard(cls, labels: np.ndarray, k: int) -> "ClusterAssignment":
        labels = np.asarray(labels, dtype=np.int64)
        if labels.ndim != 1:
            raise ShapeError(f"labels must be 1-D, got shape {labels.shape}")
        if labels.size and (labels.min() < 0 or labels.max() >= k):
            raise ValueError(f"labels must lie in [0, {k})")
        soft = np.zeros((labels.shape[0], k))
        soft[np.arange(labels.shape[0]), labels] = 1.0
        return cls(soft=soft, hard=labels)


def _squared_distances(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = (
        np.sum(x * x, axis=1)[:, None]
        - 2.0 * (x @ centers.T)
        + np.sum(centers * centers, axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def _kmeans_pp_init(
    x: np.ndarray, k: int, rng: np.random.Generator
) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[int(rng.integers(n))]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[j] = x[idx]
        d2 = np.minimum(d2, np.sum((x - centers[j]) ** 2, axis=1))
    return centers


def lloyd(
    x: np.ndarray, centers: np.ndarray, max_iter: int = 100, tol: float = 1e-6
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Lloyd iterations from given centers.

    Returns (centers, labels, per-iteration within-cluster sum of squares).
    Labels come from a final assignment pass against the returned centers.
    Empty clusters are reseeded to the point farthest from its own center.
    """
    x = as_matrix(x, "x")
    centers = np.array(centers, dtype=np.float64)
    k = centers.shape[0]
    objectives: list[float] = []
    for _ in range(max_iter):
        d2 = _squared_distances(x, centers)
        labels = d2.argmin(axis=1)
        objectives.append(float(d2[np.arange(x.shape[0]), labels].sum()))
        counts = np.bincount(labels, minlength=k)
        for j in range(k):
            if counts[j] == 0:
                # Steal the worst-fitting point, but never empty another
                # cluster; with n >= k a multi-member cluster always exists.
                own = d2[np.arange(x.shape[0]), labels].copy()
                own[counts[labels] <= 1] = -1.0
                far = int(np.argmax(own))
                counts[labels[far]] -= 1
                labels[far] = j
                counts[j] += 1
        new_centers = np.empty_like(centers)
        for j in range(k):
            new_centers[j] = x[labels == j].mean(axis=0)
        shift = float(np.sqrt(np.sum((new_centers - centers) ** 2, axis=1)).max())
        centers = new_centers
        if shift < tol:
            break
    labels = _squared_distances(x, centers).argmin(axis=1).astype(np.int64)
    return centers, labels, objectives


def kmeans(
    x: np.ndarray,
    k: int,
    seed: int | list[int],
    max_iter: int = 100,
    tol: float = 1e-6,
    return_centers: bool = False,
):
    """Seeded k-means++ plus Lloyd; returns one-hot cluster assignments."""
    x = as_matrix(x, "x")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if x.shape[0] < k:
        raise ShapeError(f"need at least k={k} samples, got {x.shape[0]}")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(x, k, rng)
    centers, labels, _ = lloyd(x, centers, max_iter=max_iter, tol=tol)
    assignment = ClusterAssignment.from_hard(labels, k)
    if return_centers:
        return assignment, centers
    return assignment


def assign_to_centers(x: np.ndarray, centers: np.ndarray) -> ClusterAssignment:
    """Nearest-center hard assignment as one-hot soft rows."""
    x = as_matrix(x, "x")
    centers = as_matrix(centers, "centers")
    labels = _squared_distances(x, centers).argmin(axis=1).astype(np.int64)
    return ClusterAssignment.from_hard(labels, centers.shape[0])


@dataclass
class PretrainConfig:
    """Settings for the reconstruction-only warm start."""

    k: int
    latent_dim: int = 32
    epochs: int = 100
    lr: float = 0.003
    batch_size: int = 256
    hidden: int = HIDDEN_WIDTH

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.latent_dim < 1:
            raise ValueError(f"latent_dim must be >= 1, got {self.latent_dim}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.lr <= 0.0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class PretrainResult:
    """Trained autoencoders plus the k-means partition of their latents."""

    autoencoders: list[ViewAutoencoder]
    features: np.ndarray
    assignment: ClusterAssignment
    centers: np.ndarray
    recon_losses: list[float]


# Sub-stream tags appended to the caller's seed so the stages stay independent.
_PRETRAIN_INIT = 1
_PRETRAIN_SHUFFLE = 2
_PRETRAIN_KMEANS = 3


def pretrain(
    dataset: MultiViewDataset, config: PretrainConfig, seed: int
) -> PretrainResult:
    """Train per-view autoencoders on reconstruction, then cluster the latents.

    The returned assignment is the k-means partition of the concatenated
    latents, in one-hot form. ``recon_losses`` holds the full-dataset
    reconstruction loss after each epoch.
    """
    if dataset.n_samples < config.k:
        raise ShapeError(
            f"dataset has {dataset.n_samples} samples, k={config.k} needs more"
        )
    init_rng = np.random.default_rng([seed, _PRETRAIN_INIT])
    shuffle_rng = np.random.default_rng([seed, _PRETRAIN_SHUFFLE])
    aes = [
        new_autoencoder(dim, config.latent_dim, init_rng, hidden=config.hidden)
        for dim in dataset.dims
    ]
    params: list[np.ndarray] = []
    for ae in aes:
        params.extend(ae.encoder.parameters())
        params.extend(ae.decoder.parameters())
    adam = AdamState.for_params(params)
    n = dataset.n_samples
    recon_losses: list[float] = []
    for _ in range(config.epochs):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch_idx = order[start : start + config.batch_size]
            grads: list[np.ndarray] = []
            for ae, view in zip(aes, dataset.views):
                batch = view[batch_idx]
                latent, enc_cache = mlp_forward(batch, ae.encoder)
                recon, dec_cache = mlp_forward(latent, ae.decoder)
                dec_grads, dlatent = mlp_backward(dec_cache, 2.0 * (recon - batch))
                enc_grads, _ = mlp_backward(enc_cache, dlatent)
                grads.extend(enc_grads)
                grads.extend(dec_grads)
            adam_step(params, grads, adam, config.lr)
        total = 0.0
        for ae, view in zip(aes, dataset.views):
            _, recon = ae_forward(view, ae)
            diff = recon - view
            total += float(np.sum(diff * diff))
        recon_losses.append(total)
    features = variant_features(dataset, aes)
    assignment, centers = kmeans(
        features, config.k, [seed, _PRETRAIN_KMEANS], return_centers=True
    )
    return PretrainResult(
        autoencoders=aes,
        features=features,
        assignment=assignment,
        centers=centers,
        recon_losses=recon_losses,
    )
