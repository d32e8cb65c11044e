"""Dense numeric core: MLPs with hand-rolled backprop, Adam, and a
finite-difference gradient checker.

Everything operates on 2-D float64 arrays (rows = samples). Layers compute
``act(x @ W.T + b)`` so weights are stored (out_dim, in_dim).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("identity", "relu", "tanh")


class ShapeError(ValueError):
    """Operands have missing, mismatched, or non-2-D shapes."""


class NumericsError(ValueError):
    """A computation produced or received non-finite values."""


def as_matrix(a: np.ndarray, name: str = "input") -> np.ndarray:
    """Coerce to a 2-D float64 array, rejecting non-finite entries."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    if m.size and not np.all(np.isfinite(m)):
        raise NumericsError(f"{name} contains non-finite entries")
    return m


def _apply_activation(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "identity":
        return z
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "tanh":
        return np.tanh(z)
    raise ValueError(f"unknown activation {activation!r}")


def _activation_grad(z: np.ndarray, out: np.ndarray, activation: str) -> np.ndarray:
    # Derivative w.r.t. the pre-activation, reusing the forward output where
    # that is cheaper than recomputing.
    if activation == "identity":
        return np.ones_like(z)
    if activation == "relu":
        return (z > 0.0).astype(np.float64)
    if activation == "tanh":
        return 1.0 - out * out
    raise ValueError(f"unknown activation {activation!r}")


@dataclass
class DenseLayer:
    """One fully connected layer: ``act(x @ weight.T + bias)``."""

    weight: np.ndarray
    bias: np.ndarray
    activation: str = "identity"

    def __post_init__(self) -> None:
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2:
            raise ShapeError(f"weight must be 2-D, got shape {self.weight.shape}")
        if self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(
                f"bias shape {self.bias.shape} does not match weight rows "
                f"{self.weight.shape[0]}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclass
class Mlp:
    """A chain of dense layers with matching inner dimensions."""

    layers: list[DenseLayer]

    def __post_init__(self) -> None:
        if not self.layers:
            raise ShapeError("Mlp needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ShapeError(
                    f"layer output dim {prev.out_dim} does not feed layer "
                    f"input dim {nxt.in_dim}"
                )

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def parameters(self) -> list[np.ndarray]:
        """Weights and biases in layer order: [W0, b0, W1, b1, ...]."""
        params: list[np.ndarray] = []
        for layer in self.layers:
            params.append(layer.weight)
            params.append(layer.bias)
        return params


@dataclass
class MlpCache:
    """Per-layer inputs and pre-activations saved by mlp_forward."""

    net: Mlp
    inputs: list[np.ndarray]
    preacts: list[np.ndarray]
    outputs: list[np.ndarray]


def mlp_forward(x: np.ndarray, net: Mlp) -> tuple[np.ndarray, MlpCache]:
    """Run the network on a batch, returning the output and a backprop cache."""
    a = as_matrix(x, "x")
    if a.shape[1] != net.in_dim:
        raise ShapeError(f"x has {a.shape[1]} columns, net expects {net.in_dim}")
    inputs, preacts, outputs = [], [], []
    for layer in net.layers:
        inputs.append(a)
        z = a @ layer.weight.T + layer.bias
        a = _apply_activation(z, layer.activation)
        preacts.append(z)
        outputs.append(a)
    return a, MlpCache(net=net, inputs=inputs, preacts=preacts, outputs=outputs)


def mlp_backward(
    cache: MlpCache, upstream: np.ndarray
) -> tuple[list[np.ndarray], np.ndarray]:
    """Backpropagate through a cached forward pass.

    Returns gradients aligned with ``net.parameters()`` plus the gradient
    w.r.t. the network input.
    """
    net = cache.net
    if len(cache.inputs) != len(net.layers):
        raise ShapeError("cache does not match network depth")
    delta = as_matrix(upstream, "upstream")
    if delta.shape != cache.outputs[-1].shape:
        raise ShapeError(
            f"upstream shape {delta.shape} does not match forward output "
            f"{cache.outputs[-1].shape}"
        )
    grads: list[np.ndarray] = [np.empty(0)] * (2 * len(net.layers))
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if cache.inputs[i].shape[1] != layer.in_dim:
            raise ShapeError("cache does not match layer shapes")
        dz = delta * _activation_grad(cache.preacts[i], cache.outputs[i], layer.activation)
        grads[2 * i] = dz.T @ cache.inputs[i]
        grads[2 * i + 1] = dz.sum(axis=0)
        delta = dz @ layer.weight
    return grads, delta


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction for overflow safety."""
    z = as_matrix(logits, "logits")
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


CROSS_ENTROPY_CLAMP = 1e-12


def softmax_cross_entropy(
    logits: np.ndarray, targets: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Softmax + summed cross-entropy against row-stochastic targets.

    Probabilities are clamped at CROSS_ENTROPY_CLAMP before the log; the
    returned logit gradient is exact for the clamped objective (clamped
    entries contribute no gradient through their own logit).
    """
    p = softmax_rows(logits)
    t = as_matrix(targets, "targets")
    if t.shape != p.shape:
        raise ShapeError(f"targets shape {t.shape} does not match logits {p.shape}")
    mask = (p >= CROSS_ENTROPY_CLAMP).astype(np.float64)
    loss = -float(np.sum(t * np.log(np.maximum(p, CROSS_ENTROPY_CLAMP))))
    # d/dlogits of -sum(t * log(clamp(p))): only unclamped cells couple.
    dlogits = p * np.sum(mask * t, axis=1, keepdims=True) - mask * t
    return loss, p, dlogits


def glorot_mlp(
    dims: list[int],
    activations: list[str],
    rng: np.random.Generator,
) -> Mlp:
    """Build an Mlp with Glorot-uniform weights and zero biases.

    ``dims`` has one more entry than ``activations``. Weights for each layer
    are drawn uniformly from +-sqrt(6 / (fan_in + fan_out)) in layer order, so
    a given generator state yields a reproducible network.
    """
    if len(dims) != len(activations) + 1:
        raise ShapeError(
            f"got {len(dims)} dims for {len(activations)} activations"
        )
    layers = []
    for fan_in, fan_out, act in zip(dims, dims[1:], activations):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weight = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        layers.append(DenseLayer(weight=weight, bias=np.zeros(fan_out), activation=act))
    return Mlp(layers)


@dataclass
class AdamState:
    """First/second moment accumulators plus the shared step counter."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: list[np.ndarray], **kwargs) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            **kwargs,
        )


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    lr: float,
) -> None:
    """One Adam update with bias correction, applied to params in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError(
            f"got {len(params)} params, {len(grads)} grads, "
            f"{len(state.m)} moment slots"
        )
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ShapeError(f"grad shape {g.shape} does not match param {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def grad_check(loss_fn, params: list[np.ndarray], fd_step: float = 1e-5) -> float:
    """Compare analytic gradients against central finite differences.

    ``loss_fn(params)`` must return ``(loss, grads)`` with grads aligned to
    params. Params are perturbed in place one entry at a time and restored.
    Returns the worst relative error max|analytic - fd| / max(1, |analytic|, |fd|).
    """
    if not 0.0 < fd_step <= 1e-3:
        raise ValueError(f"fd_step must be in (0, 1e-3], got {fd_step}")
    loss, grads = loss_fn(params)
    if not np.isfinite(loss):
        raise NumericsError(f"loss_fn returned non-finite loss {loss}")
    if len(grads) != len(params):
        raise ShapeError(f"got {len(grads)} grads for {len(params)} params")
    worst = 0.0
    for p, g in zip(params, grads):
        flat_p = p.reshape(-1)
        flat_g = np.asarray(g, dtype=np.float64).reshape(-1)
        if flat_p.shape != flat_g.shape:
            raise ShapeError(f"grad shape {g.shape} does not match param {p.shape}")
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + fd_step
            lo_hi, _ = loss_fn(params)
            flat_p[i] = orig - fd_step
            lo_lo, _ = loss_fn(params)
            flat_p[i] = orig
            if not (np.isfinite(lo_hi) and np.isfinite(lo_lo)):
                raise NumericsError("loss_fn returned non-finite loss during probing")
            fd = (lo_hi - lo_lo) / (2.0 * fd_step)
            err = abs(flat_g[i] - fd) / max(1.0, abs(flat_g[i]), abs(fd))
            worst = max(worst, err)
    return worst
