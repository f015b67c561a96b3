import numpy as np
import pytest
from hypothesis import settings

from kolmo.ou import ChainMatrix, OUDensity
from kolmo.stable import LevyModel, SphericalMeasure

settings.register_profile("kolmo", deadline=None, max_examples=40)
settings.load_profile("kolmo")


@pytest.fixture(scope="session")
def chain2():
    return ChainMatrix.scalar_chain(2)


@pytest.fixture(scope="session")
def model1():
    return LevyModel(1.5, SphericalMeasure.canonical(1))


@pytest.fixture(scope="session")
def ou2(chain2, model1):
    return OUDensity(chain2, model1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
