import numpy as np
import pytest

from mppencil.markov import DiscreteMeasure, NodePlan, build_markov_pencil


@pytest.fixture(scope="session")
def two_atom():
    """mu = (delta_{-1} + delta_1)/2 with nodes i, 2i; phi(z) = z/(z^2 - 1)."""
    mu = DiscreteMeasure(np.array([-1.0, 1.0]), np.array([0.5, 0.5]), (-1.0, 1.0))
    return build_markov_pencil(mu, NodePlan((1j, 2j)), 2)


@pytest.fixture(scope="session")
def twenty_atom():
    mu = DiscreteMeasure.uniform(-1.0, 1.0, 20)
    return build_markov_pencil(mu, NodePlan.default(24), 24)


@pytest.fixture(scope="session")
def long_markov():
    """48 atoms, 32 steps: long enough that nothing terminates."""
    mu = DiscreteMeasure.uniform(-1.0, 1.0, 48)
    return build_markov_pencil(mu, NodePlan.default(32), 32)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def rand_disk(rng, size, radius=1.0):
    r = radius * np.sqrt(rng.uniform(size=size))
    return r * np.exp(2j * np.pi * rng.uniform(size=size))
