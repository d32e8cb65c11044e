"""Variational model over invariant features and cluster assignments.

The generative story: a shared invariant feature x_in (standard normal
prior) and the observed per-view latents x_va jointly produce a pair of
Gaussian cluster embeddings, whose means feed a softmax cluster head. An
amortized encoder infers x_in from (r', x_va); swapping in misaligned
variant features at inference time leaves the learned mechanisms untouched,
so clustering misaligned data is just a forward pass through this model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autoencoder import ClusterAssignment
from .nn import Mlp, ShapeError, as_matrix, glorot_mlp, mlp_forward, softmax_rows

LOG_SIGMA_MIN = -8.0
LOG_SIGMA_MAX = 8.0


@dataclass
class GaussianParams:
    """Diagonal Gaussian: per-entry mean and log standard deviation."""

    mu: np.ndarray
    log_sigma: np.ndarray

    def __post_init__(self) -> None:
        self.mu = as_matrix(self.mu, "mu")
        self.log_sigma = as_matrix(self.log_sigma, "log_sigma")
        if self.mu.shape != self.log_sigma.shape:
            raise ShapeError(
                f"mu shape {self.mu.shape} does not match log_sigma "
                f"{self.log_sigma.shape}"
            )
        if np.any(self.log_sigma < LOG_SIGMA_MIN) or np.any(
            self.log_sigma > LOG_SIGMA_MAX
        ):
            raise ValueError(
                f"log_sigma must lie in [{LOG_SIGMA_MIN}, {LOG_SIGMA_MAX}]"
            )

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(self.log_sigma)


def split_gaussian(raw: np.ndarray) -> GaussianParams:
    """Split a 2w-wide net output into means and clamped log-sigmas."""
    raw = as_matrix(raw, "raw gaussian output")
    if raw.shape[1] % 2 != 0:
        raise ShapeError(f"raw output width {raw.shape[1]} is not even")
    w = raw.shape[1] // 2
    return GaussianParams(
        mu=raw[:, :w],
        log_sigma=np.clip(raw[:, w:], LOG_SIGMA_MIN, LOG_SIGMA_MAX),
    )


@dataclass
class CausalModel:
    """The four networks tying variant features to cluster assignments.

    f_phi:    (r', x_va) -> posterior params of x_in     (k + V*h -> 2d)
    g_theta1: (x_va, x_in) -> variant embedding params   (V*h + d -> 2m)
    g_theta2: x_in -> invariant embedding params         (d -> 2m)
    g_theta3: (e_va, e_in) -> cluster logits             (2m -> k)
    """

    f_phi: Mlp
    g_theta1: Mlp
    g_theta2: Mlp
    g_theta3: Mlp
    n_clusters: int
    invariant_dim: int
    embed_dim: int

    def __post_init__(self) -> None:
        k, d, m = self.n_clusters, self.invariant_dim, self.embed_dim
        if min(k, d, m) < 1:
            raise ValueError(
                f"dims must be positive, got k={k} d={d} m={m}"
            )
        vh = self.f_phi.in_dim - k
        if vh < 1:
            raise ShapeError(
                f"f_phi input {self.f_phi.in_dim} leaves no room for variant "
                f"features beyond k={k}"
            )
        checks = [
            (self.f_phi.out_dim, 2 * d, "f_phi output"),
            (self.g_theta1.in_dim, vh + d, "g_theta1 input"),
            (self.g_theta1.out_dim, 2 * m, "g_theta1 output"),
            (self.g_theta2.in_dim, d, "g_theta2 input"),
            (self.g_theta2.out_dim, 2 * m, "g_theta2 output"),
            (self.g_theta3.in_dim, 2 * m, "g_theta3 input"),
            (self.g_theta3.out_dim, k, "g_theta3 output"),
        ]
        for got, want, what in checks:
            if got != want:
                raise ShapeError(f"{what} is {got}, expected {want}")

    @property
    def variant_dim(self) -> int:
        return self.f_phi.in_dim - self.n_clusters


def new_causal_model(
    variant_dim: int,
    n_clusters: int,
    invariant_dim: int,
    embed_dim: int,
    rng: np.random.Generator,
    hidden: int = 64,
) -> CausalModel:
    """Glorot-initialized model with one relu hidden layer per network."""
    k, d, m = n_clusters, invariant_dim, embed_dim
    f_phi = glorot_mlp([k + variant_dim, hidden, 2 * d], ["relu", "identity"], rng)
    g1 = glorot_mlp([variant_dim + d, hidden, 2 * m], ["relu", "identity"], rng)
    g2 = glorot_mlp([d, hidden, 2 * m], ["relu", "identity"], rng)
    g3 = glorot_mlp([2 * m, hidden, k], ["relu", "identity"], rng)
    return CausalModel(
        f_phi=f_phi,
        g_theta1=g1,
        g_theta2=g2,
        g_theta3=g3,
        n_clusters=k,
        invariant_dim=d,
        embed_dim=m,
    )


@dataclass
class AnnealSchedule:
    """Linear warm-up of the KL weight over the first part of training."""

    total_epochs: int
    warm_fraction: float = 0.2

    def __post_init__(self) -> None:
        if self.total_epochs < 1:
            raise ValueError(f"total_epochs must be >= 1, got {self.total_epochs}")
        if not 0.0 < self.warm_fraction <= 1.0:
            raise ValueError(
                f"warm_fraction must be in (0, 1], got {self.warm_fraction}"
            )

    def coefficient(self, epoch: int) -> float:
        """KL weight for a 1-based epoch index; reaches 1 after warm-up."""
        if epoch < 1:
            raise ValueError(f"epoch is 1-based, got {epoch}")
        return min(1.0, epoch / (self.warm_fraction * self.total_epochs))


def encode_invariant(
    r_soft: np.ndarray, x_va: np.ndarray, model: CausalModel
) -> GaussianParams:
    """Posterior over x_in given cluster assignments and variant features."""
    r = as_matrix(r_soft, "r")
    x = as_matrix(x_va, "x_va")
    if r.shape[1] != model.n_clusters:
        raise ShapeError(
            f"r has {r.shape[1]} columns, model expects {model.n_clusters}"
        )
    if x.shape[1] != model.variant_dim:
        raise ShapeError(
            f"x_va has {x.shape[1]} columns, model expects {model.variant_dim}"
        )
    if r.shape[0] != x.shape[0]:
        raise ShapeError(
            f"r has {r.shape[0]} rows, x_va has {x.shape[0]}"
        )
    raw, _ = mlp_forward(np.hstack([r, x]), model.f_phi)
    return split_gaussian(raw)


def sample_gaussian(params: GaussianParams, eps: np.ndarray) -> np.ndarray:
    """Reparameterized draw mu + sigma * eps."""
    eps = as_matrix(eps, "eps")
    if eps.shape != params.mu.shape:
        raise ShapeError(
            f"eps shape {eps.shape} does not match mu {params.mu.shape}"
        )
    return params.mu + params.sigma * eps


def decode_variant(
    x_va: np.ndarray, x_in: np.ndarray, model: CausalModel
) -> GaussianParams:
    """Variant embedding distribution from (x_va, x_in)."""
    x_va = as_matrix(x_va, "x_va")
    x_in = as_matrix(x_in, "x_in")
    if x_va.shape[1] != model.variant_dim:
        raise ShapeError(
            f"x_va has {x_va.shape[1]} columns, model expects {model.variant_dim}"
        )
    if x_in.shape[1] != model.invariant_dim:
        raise ShapeError(
            f"x_in has {x_in.shape[1]} columns, model expects "
            f"{model.invariant_dim}"
        )
    if x_va.shape[0] != x_in.shape[0]:
        raise ShapeError(f"x_va has {x_va.shape[0]} rows, x_in has {x_in.shape[0]}")
    raw, _ = mlp_forward(np.hstack([x_va, x_in]), model.g_theta1)
    return split_gaussian(raw)


def decode_invariant(x_in: np.ndarray, model: CausalModel) -> GaussianParams:
    """Invariant embedding distribution from x_in alone."""
    x_in = as_matrix(x_in, "x_in")
    if x_in.shape[1] != model.invariant_dim:
        raise ShapeError(
            f"x_in has {x_in.shape[1]} columns, model expects "
            f"{model.invariant_dim}"
        )
    raw, _ = mlp_forward(x_in, model.g_theta2)
    return split_gaussian(raw)


def mc_mean_embed(
    params: GaussianParams, n_samples: int, rng: np.random.Generator
) -> np.ndarray:
    """Average of n reparameterized draws: mu + sigma * mean(eps_1..eps_n)."""
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    eps = rng.standard_normal((n_samples,) + params.mu.shape).mean(axis=0)
    return params.mu + params.sigma * eps


def predict_clusters(
    e_va: np.ndarray, e_in: np.ndarray, model: CausalModel
) -> ClusterAssignment:
    """Softmax cluster head over the concatenated mean embeddings."""
    e_va = as_matrix(e_va, "e_va")
    e_in = as_matrix(e_in, "e_in")
    if e_va.shape != e_in.shape:
        raise ShapeError(
            f"embedding shapes differ: {e_va.shape} vs {e_in.shape}"
        )
    if e_va.shape[1] != model.embed_dim:
        raise ShapeError(
            f"embeddings have {e_va.shape[1]} columns, model expects "
            f"{model.embed_dim}"
        )
    logits, _ = mlp_forward(np.hstack([e_va, e_in]), model.g_theta3)
    return ClusterAssignment(soft=softmax_rows(logits))


def kl_to_standard_normal(params: GaussianParams) -> float:
    """Summed KL divergence from N(mu, sigma^2) to N(0, 1) per entry."""
    mu, ls = params.mu, params.log_sigma
    return float(0.5 * np.sum(mu * mu + np.exp(2.0 * ls) - 1.0 - 2.0 * ls))


def elbo_loss(
    r_prime: ClusterAssignment,
    soft_pred: ClusterAssignment,
    kl: float,
    anneal_coeff: float,
) -> float:
    """Cross-entropy of predictions against the warm-start partition plus
    the annealed KL penalty."""
    if r_prime.soft.shape != soft_pred.soft.shape:
        raise ShapeError(
            f"assignment shapes differ: {r_prime.soft.shape} vs "
            f"{soft_pred.soft.shape}"
        )
    if kl < 0.0:
        raise ValueError(f"kl must be >= 0, got {kl}")
    if not 0.0 <= anneal_coeff <= 1.0:
        raise ValueError(f"anneal_coeff must be in [0, 1], got {anneal_coeff}")
    ce = -float(
        np.sum(r_prime.soft * np.log(np.maximum(soft_pred.soft, 1e-12)))
    )
    return ce + anneal_coeff * kl


def post_intervention_embeddings(
    x_va: np.ndarray,
    r_prime: ClusterAssignment,
    model: CausalModel,
    n_samples: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, ClusterAssignment]:
    """Full inference pass returning the mean embeddings and assignments.

    Draws one x_in per sample, then n_samples Monte-Carlo draws per embedding
    head, consuming the generator in that fixed order.
    """
    params = encode_invariant(r_prime.soft, x_va, model)
    eps = rng.standard_normal(params.mu.shape)
    x_in = sample_gaussian(params, eps)
    variant = decode_variant(x_va, x_in, model)
    invariant = decode_invariant(x_in, model)
    e_va = mc_mean_embed(variant, n_samples, rng)
    e_in = mc_mean_embed(invariant, n_samples, rng)
    return e_va, e_in, predict_clusters(e_va, e_in, model)


def post_intervention_infer(
    x_va: np.ndarray,
    r_prime: ClusterAssignment,
    model: CausalModel,
    n_samples: int,
    rng: np.random.Generator,
) -> ClusterAssignment:
    """Cluster (possibly misaligned) variant features with a trained model."""
    _, _, assignment = post_intervention_embeddings(
        x_va, r_prime, model, n_samples, rng
    )
    return assignment
