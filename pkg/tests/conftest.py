import numpy as np
import pytest

from datagen import SimSpec, fht_binary, fht_multiclass, friedman1, make_rng
from dataset import Dataset
from losses import LossFamily


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def friedman1_regression():
    """500 rows of friedman1 with Gaussian noise, for squared-error fits."""
    gen = make_rng(7)
    x = gen.uniform(0.0, 1.0, (500, 10))
    y = friedman1(x) + gen.standard_normal(500)
    return Dataset(x, y, family=LossFamily.SQUARED_ERROR)


@pytest.fixture
def binary_data():
    return fht_binary(300, seed=3)


@pytest.fixture
def multiclass_data():
    return fht_multiclass(300, seed=4, num_classes=3)


@pytest.fixture
def poisson_spec():
    return SimSpec(mean_fn="r", response="poisson", n=400, seed=11)
