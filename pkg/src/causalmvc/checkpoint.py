"""Single-file model checkpoints.

Layout (all integers little-endian, all floats IEEE-754 float64):

    magic       8 bytes     b"CMVCCKP1"
    mode        u32 length + UTF-8 bytes       ablation mode string
    config      u32 length + UTF-8 bytes       canonical key = value lines
    dims        u32 count, then per entry:
                    u32 name length + UTF-8 name, i64 value
                always includes n_views, k, h, d, m, n_samples
    arrays      u32 count, then per entry:
                    u32 name length + UTF-8 name
                    u32 rows, u32 cols, rows*cols float64 (row-major)

Network weights are stored per layer under names like
``ae0.enc.0.relu.w`` (network, layer index, activation, w or b), so the
architecture rebuilds from the names alone. Biases are stored as 1 x width
rows. Extra arrays: ``r_prime`` (warm-start hard labels as one column) and,
for the no_cau_con mode, ``kmeans.centers``. Optimizer moments are not
persisted; checkpoints resume inference, not training.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .autoencoder import ClusterAssignment, ViewAutoencoder
from .causal import CausalModel
from .config import parse_config_text, serialize_config
from .model import ModelState
from .nn import DenseLayer, Mlp

MAGIC = b"CMVCCKP1"


class CheckpointError(ValueError):
    """The checkpoint file is malformed or inconsistent."""


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _net_arrays(name: str, net: Mlp) -> list[tuple[str, np.ndarray]]:
    out = []
    for i, layer in enumerate(net.layers):
        out.append((f"{name}.{i}.{layer.activation}.w", layer.weight))
        out.append((f"{name}.{i}.{layer.activation}.b", layer.bias.reshape(1, -1)))
    return out


def save_checkpoint(state: ModelState, path: str | Path) -> None:
    """Write a ModelState to one file in the documented layout."""
    cfg = state.config
    dims = [
        ("n_views", len(state.autoencoders)),
        ("k", cfg.k),
        ("h", cfg.h),
        ("d", cfg.d),
        ("m", cfg.m),
        ("n_samples", state.r_prime.n_samples),
        ("epochs_done", state.epochs_done),
    ]
    arrays: list[tuple[str, np.ndarray]] = []
    for v, ae in enumerate(state.autoencoders):
        arrays.extend(_net_arrays(f"ae{v}.enc", ae.encoder))
        arrays.extend(_net_arrays(f"ae{v}.dec", ae.decoder))
    if state.causal is not None:
        arrays.extend(_net_arrays("f_phi", state.causal.f_phi))
        arrays.extend(_net_arrays("g_theta1", state.causal.g_theta1))
        arrays.extend(_net_arrays("g_theta2", state.causal.g_theta2))
        arrays.extend(_net_arrays("g_theta3", state.causal.g_theta3))
    if state.head is not None:
        arrays.extend(_net_arrays("head", state.head))
    if state.centers is not None:
        arrays.append(("kmeans.centers", state.centers))
    arrays.append(
        ("r_prime", state.r_prime.hard.astype(np.float64).reshape(-1, 1))
    )
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_pack_str(state.mode))
        fh.write(_pack_str(serialize_config(cfg)))
        fh.write(struct.pack("<I", len(dims)))
        for name, value in dims:
            fh.write(_pack_str(name))
            fh.write(struct.pack("<q", value))
        fh.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays:
            a = np.ascontiguousarray(arr, dtype="<f8")
            if a.ndim != 2:
                raise CheckpointError(f"array {name} must be 2-D")
            fh.write(_pack_str(name))
            fh.write(struct.pack("<II", a.shape[0], a.shape[1]))
            fh.write(a.tobytes())


class _Reader:
    def __init__(self, raw: bytes, path: Path):
        self.raw = raw
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise CheckpointError(f"{self.path}: truncated file")
        chunk = self.raw[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def i64(self) -> int:
        return struct.unpack("<q", self.take(8))[0]

    def string(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def _group_networks(
    arrays: dict[str, np.ndarray], path: Path
) -> dict[str, Mlp]:
    """Rebuild Mlps from layer-indexed array names."""
    layers: dict[str, dict[int, dict[str, object]]] = {}
    for name, arr in arrays.items():
        parts = name.split(".")
        if len(parts) < 4 or parts[-1] not in ("w", "b"):
            continue
        net_name = ".".join(parts[:-3])
        try:
            idx = int(parts[-3])
        except ValueError:
            raise CheckpointError(
                f"{path}: array name {name!r} has a non-integer layer index"
            ) from None
        slot = layers.setdefault(net_name, {}).setdefault(
            idx, {"activation": parts[-2]}
        )
        slot[parts[-1]] = arr
    nets: dict[str, Mlp] = {}
    for net_name, by_idx in layers.items():
        built = []
        for idx in range(len(by_idx)):
            if idx not in by_idx or "w" not in by_idx[idx] or "b" not in by_idx[idx]:
                raise CheckpointError(
                    f"{path}: network {net_name} is missing layer {idx} arrays"
                )
            slot = by_idx[idx]
            built.append(
                DenseLayer(
                    weight=slot["w"],
                    bias=np.asarray(slot["b"]).reshape(-1),
                    activation=str(slot["activation"]),
                )
            )
        nets[net_name] = Mlp(built)
    return nets


def load_checkpoint(path: str | Path) -> ModelState:
    """Read a checkpoint written by save_checkpoint."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
    r = _Reader(raw, path)
    r.take(len(MAGIC))
    mode = r.string()
    config_text = r.string()
    try:
        config = parse_config_text(config_text)
    except ValueError as exc:
        raise CheckpointError(f"{path}: embedded config is invalid: {exc}") from None
    if config.ablation != mode:
        raise CheckpointError(
            f"{path}: mode {mode!r} disagrees with config ablation "
            f"{config.ablation!r}"
        )
    dims = {}
    for _ in range(r.u32()):
        name = r.string()
        dims[name] = r.i64()
    for required in ("n_views", "k", "h", "d", "m", "n_samples"):
        if required not in dims:
            raise CheckpointError(f"{path}: missing dimension {required!r}")
    arrays: dict[str, np.ndarray] = {}
    for _ in range(r.u32()):
        name = r.string()
        rows, cols = struct.unpack("<II", r.take(8))
        data = np.frombuffer(r.take(rows * cols * 8), dtype="<f8")
        arrays[name] = data.reshape(rows, cols).astype(np.float64)
    if r.pos != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - r.pos} trailing bytes")
    if "r_prime" not in arrays:
        raise CheckpointError(f"{path}: missing r_prime array")
    hard = arrays["r_prime"].reshape(-1)
    if hard.shape[0] != dims["n_samples"]:
        raise CheckpointError(
            f"{path}: r_prime has {hard.shape[0]} rows, dims say "
            f"{dims['n_samples']}"
        )
    r_prime = ClusterAssignment.from_hard(hard.astype(np.int64), dims["k"])
    nets = _group_networks(arrays, path)
    aes = []
    for v in range(dims["n_views"]):
        enc = nets.get(f"ae{v}.enc")
        dec = nets.get(f"ae{v}.dec")
        if enc is None or dec is None:
            raise CheckpointError(f"{path}: missing autoencoder networks for view {v}")
        aes.append(ViewAutoencoder(encoder=enc, decoder=dec))
    causal = None
    if mode in ("full", "no_con"):
        for name in ("f_phi", "g_theta1", "g_theta2", "g_theta3"):
            if name not in nets:
                raise CheckpointError(f"{path}: missing network {name}")
        causal = CausalModel(
            f_phi=nets["f_phi"],
            g_theta1=nets["g_theta1"],
            g_theta2=nets["g_theta2"],
            g_theta3=nets["g_theta3"],
            n_clusters=dims["k"],
            invariant_dim=dims["d"],
            embed_dim=dims["m"],
        )
    head = nets.get("head")
    if mode == "no_cau" and head is None:
        raise CheckpointError(f"{path}: missing head network")
    centers = arrays.get("kmeans.centers")
    if mode == "no_cau_con" and centers is None:
        raise CheckpointError(f"{path}: missing kmeans.centers array")
    return ModelState(
        mode=mode,
        autoencoders=aes,
        r_prime=r_prime,
        config=config,
        causal=causal,
        head=head,
        centers=centers,
        epochs_done=int(dims.get("epochs_done", 0)),
    )
