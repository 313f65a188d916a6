import numpy as np
import pytest

from klmdp import FactoredKernel, ProductStateSpace, StochasticMatrix


def random_factored_model(rng, d_u, d_n, min_mass=0.05):
    """Random strictly positive factored kernel (irreducible and aperiodic)."""
    space = ProductStateSpace(d_u, d_n)
    R = rng.dirichlet(np.ones(d_u), size=space.d)
    Q0 = rng.dirichlet(np.ones(d_n), size=space.d)
    # keep entries away from zero so tilted chains stay well conditioned
    R = (R + min_mass) / (1.0 + min_mass * d_u)
    Q0 = (Q0 + min_mass) / (1.0 + min_mass * d_n)
    return FactoredKernel(space, StochasticMatrix(R), StochasticMatrix(Q0))


def random_utility(rng, d):
    return rng.uniform(-1.0, 1.0, size=d)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
