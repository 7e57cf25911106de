import numpy as np
import pytest

from surveval import GameParams, TrainConfig, build_dataset, train
from surveval import mlp


@pytest.fixture(scope="session")
def params():
    return GameParams()


@pytest.fixture(scope="session")
def small_dataset(params):
    """Reduced-resolution dataset for unit tests (full defaults live in acceptance)."""
    return build_dataset(params, n_angles=96, n_tributaries=64, store_stride=10)


@pytest.fixture(scope="session")
def quick_model(small_dataset):
    """A lightly trained model: good enough shape/behavior for behavioral tests."""
    model, _ = train(
        small_dataset,
        TrainConfig(seed=11, epochs=150, patience=150, batch_size=256),
    )
    return model


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def random_model(rng):
    return mlp.init_model(rng)
