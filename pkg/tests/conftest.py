"""Pytest configuration and fixtures."""

import numpy as np
import pytest
import structlog

from pmgan.models.network import PmGanParams
from pmgan.schemas.configs import ModelSpec, SynthConfig, TrainConfig
from pmgan.services.synthdata import DatasetSplit, synthesize


@pytest.fixture(autouse=True)
def reset_structlog():
    """Drop logger configuration bound to a captured stream by a CLI test."""
    yield
    structlog.reset_defaults()


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator for random operands."""
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_spec() -> ModelSpec:
    """Smallest model that exercises every layer (H=W=2, D=3, C=3, T=2)."""
    return ModelSpec(height=2, width=2, channels=3, class_count=3, clips=2)


@pytest.fixture
def tiny_params(tiny_spec: ModelSpec) -> PmGanParams:
    """Glorot-initialized parameters for the tiny model."""
    return PmGanParams.initialize(tiny_spec, np.random.default_rng(7))


@pytest.fixture
def tiny_synth_config() -> SynthConfig:
    """Synthetic corpus matching the tiny model."""
    return SynthConfig(
        class_count=3,
        samples_per_class=8,
        clips=2,
        height=2,
        width=2,
        channels=3,
        latent_dim=4,
        infrared_rank=2,
        seed=3,
    )


@pytest.fixture
def tiny_split(tiny_synth_config: SynthConfig) -> DatasetSplit:
    """Train/test split of the tiny corpus (18 train / 6 test)."""
    return synthesize(tiny_synth_config)


@pytest.fixture
def tiny_train_config() -> TrainConfig:
    """Short run with a learning rate large enough to move parameters visibly."""
    return TrainConfig(batch_size=5, epochs=2, learning_rate=1e-3, seed=11)
