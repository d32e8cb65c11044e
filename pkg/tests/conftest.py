"""Shared builders for small, fast model states used across test modules."""

import numpy as np
import pytest

from causalmvc.config import TrainConfig
from causalmvc.data import make_synthetic, minmax_normalize
from causalmvc.autoencoder import PretrainConfig, pretrain
from causalmvc.model import NoiseDraws, init_state


def build_tiny_state(mode="full", seed=0, n=12, k=3, h=4, d=3, m=4, hidden_epochs=1):
    """Small end-to-end state plus one fixed batch for gradient work.

    Returns (state, views, r_soft, noise, anneal) where views is the
    normalized full dataset and noise holds fixed draws, so repeated
    forward passes are deterministic.
    """
    data = make_synthetic(n, k, 2, [5, 4], separation=8.0, noise=0.3, seed=seed)
    norm = minmax_normalize(data)
    config = TrainConfig(
        k=k, h=h, d=d, m=m, batch_size=max(2, n // 2), seed=seed, ablation=mode
    )
    pre = pretrain(
        norm,
        PretrainConfig(k=k, latent_dim=h, epochs=hidden_epochs, lr=0.003,
                       batch_size=max(2, n // 2)),
        seed=seed,
    )
    rng = np.random.default_rng([seed, 5])
    state = init_state(config, pre.autoencoders, pre.assignment, pre.centers, rng)
    noise_rng = np.random.default_rng([seed, 6])
    noise = NoiseDraws.sample(n, d, m, 1, noise_rng)
    return state, norm.views, pre.assignment.soft, noise, 0.7


@pytest.fixture
def tiny_state_factory():
    return build_tiny_state


# test_acceptance.py appends one line per criterion; echo them at the end of
# the session so the verdicts survive output capture.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
