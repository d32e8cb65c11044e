"""Training configuration and its flat key = value file format."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

ABLATION_MODES = ("full", "no_cau", "no_con", "no_cau_con")


class ConfigError(ValueError):
    """A config value or file entry is invalid; message names the key."""


@dataclass
class TrainConfig:
    """All knobs for one training run.

    h is the per-view latent width, d the invariant feature width, m the
    cluster embedding width, k the number of clusters. alpha and beta weigh
    the variational and contrastive terms of the total loss.
    """

    k: int
    h: int = 32
    d: int = 16
    m: int = 32
    alpha: float = 1.0
    beta: float = 1.0
    lr: float = 0.003
    epochs: int = 500
    batch_size: int = 256
    warm_fraction: float = 0.2
    mc_samples_train: int = 1
    mc_samples_infer: int = 8
    seed: int = 0
    ablation: str = "full"

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        for name in ("h", "d", "m"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("alpha", "beta"):
            if getattr(self, name) < 0.0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.lr <= 0.0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if not 0.0 < self.warm_fraction <= 1.0:
            raise ConfigError(
                f"warm_fraction must be in (0, 1], got {self.warm_fraction}"
            )
        for name in ("mc_samples_train", "mc_samples_infer"):
            if getattr(self, name) < 1:
                raise ConfigError(
                    f"{name} must be >= 1, got {getattr(self, name)}"
                )
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        if self.ablation not in ABLATION_MODES:
            raise ConfigError(
                f"ablation must be one of {ABLATION_MODES}, got {self.ablation!r}"
            )


def _parse_value(key: str, raw: str, target_type: type):
    try:
        if target_type is int:
            return int(raw)
        if target_type is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(
            f"config key {key!r} expects {target_type.__name__}, got {raw!r}"
        ) from None


def parse_config_text(text: str) -> TrainConfig:
    """Parse 'key = value' lines; '#' starts a comment, blank lines skip."""
    field_types = {f.name: f.type for f in fields(TrainConfig)}
    # Dataclass field annotations are strings under future-annotations.
    type_map = {"int": int, "float": float, "str": str}
    seen: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in field_types:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate config key {key!r}")
        if not raw:
            raise ConfigError(f"line {lineno}: empty value for key {key!r}")
        seen[key] = _parse_value(key, raw, type_map[str(field_types[key])])
    if "k" not in seen:
        raise ConfigError("config must set k")
    return TrainConfig(**seen)  # type: ignore[arg-type]


def load_config(path: str | Path) -> TrainConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def serialize_config(config: TrainConfig) -> str:
    """Canonical key = value rendering, one field per line in field order."""
    lines = []
    for f in fields(TrainConfig):
        value = getattr(config, f.name)
        if isinstance(value, float):
            lines.append(f"{f.name} = {format(value, '.17g')}")
        else:
            lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
