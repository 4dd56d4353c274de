import os

import numpy as np
import pytest
from hypothesis import settings

from viscowave.grid import Grid
from viscowave.kernel import KernelSpec

settings.register_profile("default", deadline=None, max_examples=60)
settings.register_profile("ci", deadline=None, max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def grid255():
    return Grid.interval(255)


@pytest.fixture(scope="session")
def kernel11():
    return KernelSpec(((1.0, 1.0),))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
