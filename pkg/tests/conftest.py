import numpy as np
import pytest

from wpir.allocation import ReducedAllocation
from wpir.core import SystemParams, weight_profile
from wpir.scheme import MessageStore

HETERO = (0.1, 0.3, 0.6)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


@pytest.fixture
def params32():
    return SystemParams(3, 2)


@pytest.fixture
def hetero32():
    return SystemParams(3, 2, HETERO)


@pytest.fixture
def store32(params32, rng):
    return MessageStore.random(params32, rng)


@pytest.fixture
def random_reduced():
    """Draw uniform points of the reduced polytope by splitting unit mass over p_# and the weight classes"""

    def draw(params, rng):
        s = weight_profile(params.N, params.K).s_array
        w = rng.dirichlet(np.ones(params.K + 1))
        return ReducedAllocation(w[0] / params.N, tuple(w[1:] / (params.N * s)))

    return draw
