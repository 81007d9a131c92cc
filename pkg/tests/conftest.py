import warnings

import numpy as np
import pytest

from stokeswkb import NDifferential, build_graph
from stokeswkb.errors import NearDoubleCrossing, CrossSectorRequest

warnings.simplefilter("ignore", NearDoubleCrossing)
warnings.simplefilter("ignore", CrossSectorRequest)

LADDER = (1e2, 1e3, 1e4, 1e5)
DIST_LADDER = (1e3, 1e4, 1e5, 1e6)


@pytest.fixture(scope="session")
def airy():
    return NDifferential(2, (0, 1))


@pytest.fixture(scope="session")
def airy_graph(airy):
    return build_graph(airy, R=4.0)


@pytest.fixture(scope="session")
def cubic():
    return NDifferential(3, (-1.0, 0, 0, 1.0))


@pytest.fixture(scope="session")
def cubic_graph(cubic):
    return build_graph(cubic, R=6.0, max_generations=1)


@pytest.fixture(scope="session")
def ladder():
    return LADDER


@pytest.fixture(scope="session")
def dist_ladder():
    return DIST_LADDER


def rng(seed=0):
    return np.random.default_rng(seed)
