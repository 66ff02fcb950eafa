"""Shared fixtures: a small synthetic dataset and a tiny trained model.

Session scope keeps the expensive pieces (dataset rendering, a short
training run) to one instance across the whole suite.
"""

import numpy as np
import pytest

from hgnet import (
    ModelConfig,
    TrainConfig,
    default_skeleton,
    generate,
    init_params,
    train,
)


@pytest.fixture(scope="session")
def small_dataset():
    """24 96-px samples with occlusion and truncation present."""
    return generate(
        default_skeleton(),
        count=24,
        image_size=96,
        seed=11,
        occlusion_prob=0.3,
        truncation_prob=0.15,
    )


@pytest.fixture(scope="session")
def tiny_config():
    """Smallest legal two-stack model; keeps forward passes cheap."""
    return ModelConfig(
        num_joints=14,
        num_stacks=2,
        num_features=16,
        hourglass_depth=1,
        modules_per_location=1,
        input_resolution=32,
    )


@pytest.fixture(scope="session")
def tiny_trained(small_dataset, tiny_config):
    """(params, state, optimizer, config) after a 12-iteration run."""
    aset = small_dataset.annotation_set()
    images = [s.image for s in small_dataset.samples]
    params = init_params(tiny_config, seed=5)
    config = TrainConfig(max_iterations=12, eval_every=6, batch_size=4, seed=5)
    log, state, optimizer = train(params, (aset, images), config)
    return params, state, optimizer, config


def rng(seed=0):
    return np.random.default_rng(seed)
