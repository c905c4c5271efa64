import warnings

import numpy as np
import pytest

from hopfbalance.model import load_model


@pytest.fixture(scope="session")
def pyragas():
    return load_model("pyragas")


@pytest.fixture(scope="session")
def leukemia():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return load_model("leukemia")


@pytest.fixture(scope="session")
def leuk_bautin(leukemia):
    from hopfbalance.hopf import find_critical
    return find_critical(leukemia, None, ("tau", 4.9740704569))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
