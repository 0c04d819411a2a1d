import pathlib
import sys

import numpy as np
import pytest

ROOT_DIR = pathlib.Path(__file__).resolve().parent.parent
if str(ROOT_DIR) not in sys.path:
    sys.path.insert(0, str(ROOT_DIR))

from config import ExperimentSpec, TrainConfig  # noqa: E402
from data.synthetic import make_domain_pair  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    return TrainConfig(warmup_epochs=2, train_epochs=2, batch_size=32, hidden_dims=(16,),
                       embedding_dim=4, seed=0)


@pytest.fixture
def tiny_spec():
    return ExperimentSpec(classes=3, in_dim=4, n_per_class=40, class_sep=6.0, noise_level=0.4)


@pytest.fixture
def domain_pair(tiny_spec):
    return make_domain_pair(tiny_spec, 0)
