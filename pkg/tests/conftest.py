import numpy as np
import pytest

from safedr.envs import ChainSpec, build_chain


@pytest.fixture(scope="session")
def chain_pair():
    return build_chain(ChainSpec(epsilon=0.25, gamma=0.9))


@pytest.fixture()
def rng():
    return np.random.default_rng(20260815)
