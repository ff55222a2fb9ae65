import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from coupledsys.models import double_pendulum_pivot, random_affine_ccs, split_cart  # noqa: E402
from coupledsys.reduction import IsolatedModel  # noqa: E402


@pytest.fixture(scope="session")
def oracles():
    return json.loads((Path(__file__).parent / "data" / "oracles.json").read_text())


@pytest.fixture(scope="session")
def cart():
    return split_cart()


@pytest.fixture(scope="session")
def cart_iso(cart):
    return IsolatedModel(cart.ccs, 1)


@pytest.fixture(scope="session")
def pendulum():
    return double_pendulum_pivot()


@pytest.fixture(scope="session")
def affine():
    return random_affine_ccs(seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def manifold_point(rng, n_x, n_z, scale=0.1):
    z = scale * rng.standard_normal(n_z)
    return scale * rng.standard_normal(n_x), {1: z, 2: z.copy()}
