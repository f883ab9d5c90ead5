"""
Shared test fixtures.

Tiny float64 configurations keep every forward pass in the millisecond
range; the ``slow`` marker gates the training experiments.
"""

import numpy as np
import pytest

from model.config import ModelConfig
from model.network import SSMRadNet
from radar import random_scenes, rasterize_labels, synthesize_frame
from radar.scene import AdcFrame
from training import TrainConfig, Trainer
from utils.settings import get_settings


def _run_slow() -> bool:
    return get_settings().run_slow


def pytest_collection_modifyitems(config, items):
    if _run_slow():
        return
    skip = pytest.mark.skip(reason="slow experiment; set SSMRADNET_RUN_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    """C=2, S=8, N_Rx=2, d_state=4 on a 16×16 grid."""
    return ModelConfig(
        n_rx=2, s_per_chirp=8, chirps_per_frame=2, d_conv=2, d_state=4,
        h0=4, w0=4, c_dec=2, precision="float64", seed=0,
    )


@pytest.fixture
def small_config():
    """C=4, S=16, N_Rx=4 with the default widths scaled down."""
    return ModelConfig(
        n_rx=4, s_per_chirp=16, chirps_per_frame=4, d_conv=4, d_state=8,
        h0=4, w0=4, c_dec=4, precision="float64", seed=3,
    )


def random_frame(rng: np.random.Generator, dims) -> AdcFrame:
    """Unit-variance complex Gaussian frame."""
    shape = tuple(dims)
    return AdcFrame(rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


@pytest.fixture
def make_frame(rng):
    return lambda dims: random_frame(rng, dims)


LEARNING_CONFIG = dict(
    n_rx=8, s_per_chirp=128, chirps_per_frame=32, d_state=8, h0=8, w0=8, c_dec=8, seed=5,
)


@pytest.fixture(scope="session")
def learning_data():
    """256 train / 64 val seeded frames at C=32, S=128, N_Rx=8 on a 32×32 grid."""
    config = ModelConfig(**LEARNING_CONFIG)

    def build(count, seed):
        scenes = random_scenes(count, config.dims, seed=seed, snr_db=10.0, min_targets=1, max_targets=4)
        return [(synthesize_frame(s), rasterize_labels(s, config.output_grid)) for s in scenes]

    return config, build(256, 101), build(64, 202)


@pytest.fixture(scope="session")
def learning_run(learning_data):
    """The learning dataset trained for up to 100 epochs with the RADIal hyperparameters."""
    config, train, val = learning_data
    model = SSMRadNet(config)
    result = Trainer(model, TrainConfig.radial(epochs=100, eval_every=5)).fit(train, val)
    return model, result
