import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from survimpact import SurvivalDataset, generate, scenario  # noqa: E402
from survimpact._rng import DATA, stream  # noqa: E402


@pytest.fixture
def tiny_ds():
    """Hand-sized dataset with censoring, a time tie and a risk tie."""
    y = np.array([2.0, 5.0, 3.0, 3.0, 8.0, 1.0, 6.0, 4.0])
    delta = np.array([1, 0, 1, 1, 0, 1, 1, 1])
    x = np.array([
        [0.5, -1.0],
        [-0.2, 0.3],
        [1.1, 0.0],
        [1.1, 0.0],
        [-0.7, 0.9],
        [0.0, 0.0],
        [0.3, -0.4],
        [-1.2, 1.5],
    ])
    z = np.array([[0.2], [-0.1], [0.4], [-0.6], [0.8], [0.0], [-0.3], [0.5]])
    return SurvivalDataset(y=y, delta=delta, x=x, z=z, tau=6.5)


@pytest.fixture(scope="session")
def ph_ds():
    """Moderate simulated dataset from the proportional-hazards
    generator, 25% censoring."""
    scn = scenario("ph", xi=0.025, censoring=0.25, n=160, seed=7)
    return generate(scn, stream(scn.seed, DATA, 0))


@pytest.fixture(scope="session")
def ph_ds_uncensored():
    scn = scenario("ph", xi=0.05, censoring=0.0, n=140, seed=11)
    return generate(scn, stream(scn.seed, DATA, 0))
