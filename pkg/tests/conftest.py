import numpy as np
import pytest
import torch

from src.phantom.dataset import generate_dataset
from src.utils.config import AugmentConfig, ModelConfig, PhantomConfig, TrainConfig


@pytest.fixture
def small_phantom_config():
    return PhantomConfig(dims=(32, 32, 32), radius_range=(1.5, 2.5), seed=3)


@pytest.fixture
def tiny_model_config():
    return ModelConfig(widths=[4, 8, 12, 16, 20])


@pytest.fixture
def quick_train_config():
    return TrainConfig(epochs=1, batch_size=8, folds=5, seed=0, learning_rate=0.01,
                       augmentation=AugmentConfig(flip_prob=0.5, brightness=0.0, contrast=0.0, hue=0.0))


@pytest.fixture(scope="session")
def phantom_cohort(tmp_path_factory):
    """Five 32^3 subjects on disk, shared by the training and CLI tests."""
    cfg = PhantomConfig(dims=(32, 32, 32), radius_range=(1.5, 2.5), seed=3)
    return generate_dataset(cfg, 5, str(tmp_path_factory.mktemp("cohort")), progress=False)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _seed_torch():
    torch.manual_seed(0)