"""Joint model bundle and the hand-chained forward/backward of the total loss.

The total training loss is

    L = L_R + alpha * (CE + anneal * KL) + beta * L_C

where L_R is summed squared reconstruction error over all views, CE the
cross-entropy of the cluster head against the warm-start partition, KL the
annealed divergence of the invariant posterior from its standard-normal
prior, and L_C the cosine alignment regularizer. Ablations swap terms out:
``no_con`` zeroes beta on the same code path, ``no_cau`` replaces the
variational branch with a plain softmax head on the variant features, and
``no_cau_con`` skips joint training entirely.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autoencoder import ClusterAssignment, ViewAutoencoder
from .causal import (
    LOG_SIGMA_MAX,
    LOG_SIGMA_MIN,
    CausalModel,
    new_causal_model,
)
from .config import TrainConfig
from .contrastive import contrastive_grads, contrastive_loss, similarity_matrix
from .nn import (
    Mlp,
    ShapeError,
    glorot_mlp,
    mlp_backward,
    mlp_forward,
    softmax_cross_entropy,
)

HIDDEN_WIDTH = 64


@dataclass
class ModelState:
    """Everything a trained run needs to cluster new rows of the same data."""

    mode: str
    autoencoders: list[ViewAutoencoder]
    r_prime: ClusterAssignment
    config: TrainConfig
    causal: CausalModel | None = None
    head: Mlp | None = None
    centers: np.ndarray | None = None
    epochs_done: int = 0

    @property
    def view_dims(self) -> list[int]:
        return [ae.input_dim for ae in self.autoencoders]

    @property
    def variant_dim(self) -> int:
        return sum(ae.latent_dim for ae in self.autoencoders)


def init_state(
    config: TrainConfig,
    pre_autoencoders: list[ViewAutoencoder],
    r_prime: ClusterAssignment,
    centers: np.ndarray,
    rng: np.random.Generator,
) -> ModelState:
    """Attach the mode-appropriate trainable heads to pretrained encoders."""
    variant_dim = sum(ae.latent_dim for ae in pre_autoencoders)
    causal = None
    head = None
    if config.ablation in ("full", "no_con"):
        causal = new_causal_model(
            variant_dim=variant_dim,
            n_clusters=config.k,
            invariant_dim=config.d,
            embed_dim=config.m,
            rng=rng,
            hidden=HIDDEN_WIDTH,
        )
    elif config.ablation == "no_cau":
        head = glorot_mlp(
            [variant_dim, HIDDEN_WIDTH, config.k], ["relu", "identity"], rng
        )
    return ModelState(
        mode=config.ablation,
        autoencoders=pre_autoencoders,
        r_prime=r_prime,
        config=config,
        causal=causal,
        head=head,
        centers=centers,
    )


def joint_networks(state: ModelState) -> list[tuple[str, Mlp]]:
    """All trainable networks in their canonical (parameter) order."""
    nets: list[tuple[str, Mlp]] = []
    for v, ae in enumerate(state.autoencoders):
        nets.append((f"ae{v}.enc", ae.encoder))
        nets.append((f"ae{v}.dec", ae.decoder))
    if state.causal is not None:
        nets.append(("f_phi", state.causal.f_phi))
        nets.append(("g_theta1", state.causal.g_theta1))
        nets.append(("g_theta2", state.causal.g_theta2))
        nets.append(("g_theta3", state.causal.g_theta3))
    if state.head is not None:
        nets.append(("head", state.head))
    return nets


def collect_params(state: ModelState) -> list[np.ndarray]:
    params: list[np.ndarray] = []
    for _, net in joint_networks(state):
        params.extend(net.parameters())
    return params


@dataclass
class LossParts:
    """Scalar pieces of one loss evaluation."""

    total: float
    l_r: float
    l_elbo: float
    l_c: float
    ce: float
    kl: float
    anneal: float


@dataclass
class ForwardPass:
    """Caches and intermediates needed to backpropagate one batch."""

    views: list[np.ndarray]
    r_soft: np.ndarray
    anneal: float
    enc_caches: list = field(default_factory=list)
    dec_caches: list = field(default_factory=list)
    recons: list[np.ndarray] = field(default_factory=list)
    latent_widths: list[int] = field(default_factory=list)
    x_va: np.ndarray | None = None
    parts: LossParts | None = None
    probs: np.ndarray | None = None
    dlogits: np.ndarray | None = None
    # causal-branch intermediates
    f_cache: object = None
    g1_cache: object = None
    g2_cache: object = None
    g3_cache: object = None
    mu_phi: np.ndarray | None = None
    ls_phi: np.ndarray | None = None
    sig_phi: np.ndarray | None = None
    mask_phi: np.ndarray | None = None
    eps_in: np.ndarray | None = None
    sig1: np.ndarray | None = None
    mask1: np.ndarray | None = None
    eps_va: np.ndarray | None = None
    sig2: np.ndarray | None = None
    mask2: np.ndarray | None = None
    eps_in2: np.ndarray | None = None
    e_va: np.ndarray | None = None
    e_in: np.ndarray | None = None
    head_cache: object = None


def _encode_views(state: ModelState, views: list[np.ndarray], fp: ForwardPass) -> None:
    l_r = 0.0
    latents = []
    for ae, view in zip(state.autoencoders, views):
        latent, enc_cache = mlp_forward(view, ae.encoder)
        recon, dec_cache = mlp_forward(latent, ae.decoder)
        fp.enc_caches.append(enc_cache)
        fp.dec_caches.append(dec_cache)
        fp.recons.append(recon)
        fp.latent_widths.append(latent.shape[1])
        latents.append(latent)
        diff = recon - view
        l_r += float(np.sum(diff * diff))
    fp.x_va = np.hstack(latents)
    fp.parts = LossParts(
        total=0.0, l_r=l_r, l_elbo=0.0, l_c=0.0, ce=0.0, kl=0.0, anneal=fp.anneal
    )


def effective_beta(state: ModelState) -> float:
    """Contrastive weight actually applied; no_con forces it to zero."""
    if state.mode == "no_con":
        return 0.0
    return state.config.beta


def _split_clamped(raw: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    w = raw.shape[1] // 2
    mu = raw[:, :w]
    ls_raw = raw[:, w:]
    # Clamped entries get zero gradient; the mask records which ones moved.
    mask = ((ls_raw > LOG_SIGMA_MIN) & (ls_raw < LOG_SIGMA_MAX)).astype(np.float64)
    ls = np.clip(ls_raw, LOG_SIGMA_MIN, LOG_SIGMA_MAX)
    return mu, ls, np.exp(ls), mask


def full_forward(
    state: ModelState,
    views: list[np.ndarray],
    r_soft: np.ndarray,
    eps_in: np.ndarray,
    eps_va: np.ndarray,
    eps_in2: np.ndarray,
    anneal: float,
    with_contrastive: bool = True,
) -> ForwardPass:
    """Forward pass of the variational branch with injected noise draws.

    ``eps_va`` and ``eps_in2`` are the already-averaged Monte-Carlo draws for
    the two embedding heads; passing zeros gives the deterministic mean path.
    """
    model = state.causal
    if model is None:
        raise ValueError(f"mode {state.mode!r} has no causal branch")
    fp = ForwardPass(views=views, r_soft=r_soft, anneal=anneal)
    _encode_views(state, views, fp)
    cfg = state.config
    raw_phi, fp.f_cache = mlp_forward(np.hstack([r_soft, fp.x_va]), model.f_phi)
    fp.mu_phi, fp.ls_phi, fp.sig_phi, fp.mask_phi = _split_clamped(raw_phi)
    fp.eps_in = eps_in
    x_in = fp.mu_phi + fp.sig_phi * eps_in
    kl = float(
        0.5
        * np.sum(
            fp.mu_phi * fp.mu_phi + np.exp(2.0 * fp.ls_phi) - 1.0 - 2.0 * fp.ls_phi
        )
    )
    raw1, fp.g1_cache = mlp_forward(np.hstack([fp.x_va, x_in]), model.g_theta1)
    mu1, _, fp.sig1, fp.mask1 = _split_clamped(raw1)
    fp.eps_va = eps_va
    fp.e_va = mu1 + fp.sig1 * eps_va
    raw2, fp.g2_cache = mlp_forward(x_in, model.g_theta2)
    mu2, _, fp.sig2, fp.mask2 = _split_clamped(raw2)
    fp.eps_in2 = eps_in2
    fp.e_in = mu2 + fp.sig2 * eps_in2
    logits, fp.g3_cache = mlp_forward(np.hstack([fp.e_va, fp.e_in]), model.g_theta3)
    ce, fp.probs, fp.dlogits = softmax_cross_entropy(logits, r_soft)
    beta = effective_beta(state)
    l_c = 0.0
    if with_contrastive and beta != 0.0:
        l_c = contrastive_loss(similarity_matrix(fp.e_va, fp.e_in))
    parts = fp.parts
    parts.ce = ce
    parts.kl = kl
    parts.l_elbo = ce + anneal * kl
    parts.l_c = l_c
    parts.total = parts.l_r + cfg.alpha * parts.l_elbo + beta * parts.l_c
    return fp


def _backprop_autoencoders(
    state: ModelState,
    fp: ForwardPass,
    dx_va: np.ndarray,
    grads_by_net: dict[str, list[np.ndarray]],
) -> None:
    offset = 0
    for v, (ae, view) in enumerate(zip(state.autoencoders, fp.views)):
        width = fp.latent_widths[v]
        drecon = 2.0 * (fp.recons[v] - view)
        dec_grads, dlatent = mlp_backward(fp.dec_caches[v], drecon)
        dlatent = dlatent + dx_va[:, offset : offset + width]
        enc_grads, _ = mlp_backward(fp.enc_caches[v], dlatent)
        grads_by_net[f"ae{v}.enc"] = enc_grads
        grads_by_net[f"ae{v}.dec"] = dec_grads
        offset += width


def full_backward(state: ModelState, fp: ForwardPass) -> list[np.ndarray]:
    """Gradients of the total loss, aligned with collect_params order."""
    model = state.causal
    cfg = state.config
    grads_by_net: dict[str, list[np.ndarray]] = {}
    dlogits = cfg.alpha * fp.dlogits
    g3_grads, dg3in = mlp_backward(fp.g3_cache, dlogits)
    m = model.embed_dim
    de_va = dg3in[:, :m].copy()
    de_in = dg3in[:, m:].copy()
    beta = effective_beta(state)
    if beta != 0.0:
        _, gva, gin = contrastive_grads(fp.e_va, fp.e_in)
        de_va += beta * gva
        de_in += beta * gin
    dmu1 = de_va
    dls1 = de_va * fp.sig1 * fp.eps_va * fp.mask1
    g1_grads, dg1in = mlp_backward(fp.g1_cache, np.hstack([dmu1, dls1]))
    vh = model.variant_dim
    dx_va = dg1in[:, :vh].copy()
    dx_in = dg1in[:, vh:].copy()
    dmu2 = de_in
    dls2 = de_in * fp.sig2 * fp.eps_in2 * fp.mask2
    g2_grads, dx_in2 = mlp_backward(fp.g2_cache, np.hstack([dmu2, dls2]))
    dx_in += dx_in2
    # KL plus the reparameterization route, through the clamp mask.
    a_ann = cfg.alpha * fp.anneal
    dmu_phi = a_ann * fp.mu_phi + dx_in
    dls_phi = (
        a_ann * (np.exp(2.0 * fp.ls_phi) - 1.0) + dx_in * fp.sig_phi * fp.eps_in
    ) * fp.mask_phi
    f_grads, df_in = mlp_backward(fp.f_cache, np.hstack([dmu_phi, dls_phi]))
    dx_va += df_in[:, model.n_clusters :]
    grads_by_net["f_phi"] = f_grads
    grads_by_net["g_theta1"] = g1_grads
    grads_by_net["g_theta2"] = g2_grads
    grads_by_net["g_theta3"] = g3_grads
    _backprop_autoencoders(state, fp, dx_va, grads_by_net)
    return _flatten_grads(state, grads_by_net)


def head_forward(
    state: ModelState, views: list[np.ndarray], r_soft: np.ndarray
) -> ForwardPass:
    """Forward pass of the plain softmax-head branch (no_cau ablation)."""
    if state.head is None:
        raise ValueError(f"mode {state.mode!r} has no softmax head")
    fp = ForwardPass(views=views, r_soft=r_soft, anneal=0.0)
    _encode_views(state, views, fp)
    logits, fp.head_cache = mlp_forward(fp.x_va, state.head)
    ce, fp.probs, fp.dlogits = softmax_cross_entropy(logits, r_soft)
    parts = fp.parts
    parts.ce = ce
    parts.l_elbo = ce
    parts.total = parts.l_r + ce
    return fp


def head_backward(state: ModelState, fp: ForwardPass) -> list[np.ndarray]:
    grads_by_net: dict[str, list[np.ndarray]] = {}
    head_grads, dx_va = mlp_backward(fp.head_cache, fp.dlogits)
    grads_by_net["head"] = head_grads
    _backprop_autoencoders(state, fp, dx_va, grads_by_net)
    return _flatten_grads(state, grads_by_net)


def _flatten_grads(
    state: ModelState, grads_by_net: dict[str, list[np.ndarray]]
) -> list[np.ndarray]:
    flat: list[np.ndarray] = []
    for name, net in joint_networks(state):
        grads = grads_by_net.get(name)
        if grads is None or len(grads) != 2 * len(net.layers):
            raise ShapeError(f"missing or misshapen gradients for {name}")
        flat.extend(grads)
    return flat


@dataclass
class NoiseDraws:
    """Reparameterization noise for one batch, pre-averaged for the MC heads."""

    eps_in: np.ndarray
    eps_va: np.ndarray
    eps_in2: np.ndarray

    @classmethod
    def sample(
        cls,
        n: int,
        invariant_dim: int,
        embed_dim: int,
        n_mc: int,
        rng: np.random.Generator,
    ) -> "NoiseDraws":
        eps_in = rng.standard_normal((n, invariant_dim))
        eps_va = rng.standard_normal((n_mc, n, embed_dim)).mean(axis=0)
        eps_in2 = rng.standard_normal((n_mc, n, embed_dim)).mean(axis=0)
        return cls(eps_in=eps_in, eps_va=eps_va, eps_in2=eps_in2)

    @classmethod
    def zeros(cls, n: int, invariant_dim: int, embed_dim: int) -> "NoiseDraws":
        return cls(
            eps_in=np.zeros((n, invariant_dim)),
            eps_va=np.zeros((n, embed_dim)),
            eps_in2=np.zeros((n, embed_dim)),
        )


def batch_loss_and_grads(
    state: ModelState,
    views: list[np.ndarray],
    r_soft: np.ndarray,
    noise: NoiseDraws | None,
    anneal: float,
) -> tuple[LossParts, list[np.ndarray]]:
    """One loss + gradient evaluation for the current ablation mode."""
    if state.mode in ("full", "no_con"):
        fp = full_forward(
            state,
            views,
            r_soft,
            noise.eps_in,
            noise.eps_va,
            noise.eps_in2,
            anneal,
        )
        return fp.parts, full_backward(state, fp)
    if state.mode == "no_cau":
        fp = head_forward(state, views, r_soft)
        return fp.parts, head_backward(state, fp)
    raise ValueError(f"mode {state.mode!r} does not train a joint model")
