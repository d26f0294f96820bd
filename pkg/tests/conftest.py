import numpy as np
import pytest
from hypothesis import settings

from spatial_ld.point_process import Seed

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def seed():
    return Seed(20261016)
