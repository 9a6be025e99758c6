"""Shared fixtures: trained models are expensive, so one baseline/dropout
pair at the default seed is trained once per session and reused."""

from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from recdrop.augmentation import DropoutSampler
from recdrop.config import DEFAULT_SEED, resolve_config
from recdrop.numerics import Rng
from recdrop.simulator import build_transition_matrix, sample_trajectories
from recdrop.training import train


@pytest.fixture(scope="session")
def default_train_config():
    return resolve_config().train_config()


@pytest.fixture(scope="session")
def default_baseline(default_train_config):
    """(params, log) for the default 500-step baseline run."""
    return train(default_train_config)


@pytest.fixture(scope="session")
def default_dropout(default_train_config):
    """(params, log) for the default run with N ~ U[0, 5) recency dropout."""
    config = replace(
        default_train_config,
        sampler=DropoutSampler.uniform(0, 5, inclusive=False),
    )
    return train(config)


@pytest.fixture(scope="session")
def eval_sequences(default_train_config):
    """A fixed batch of 1000 raw evaluation trajectories."""
    p = build_transition_matrix(default_train_config.transition)
    rng = Rng(DEFAULT_SEED).substream("shared-eval")
    return sample_trajectories(p, 1000, default_train_config.sequence_length, rng)
