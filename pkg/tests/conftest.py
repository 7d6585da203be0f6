import numpy as np
import pytest

from quickdet.signal_core import Belief, GaussianPairObservation, TransitionModel2


def random_instance(rng, sigma_lo=0.2, sigma_hi=5.0):
    """Random chain, Gaussian pair, and interior initial belief."""
    model = TransitionModel2(rng.uniform(0.01, 0.99), rng.uniform(0.01, 0.99))
    obs = GaussianPairObservation(
        mu1=rng.normal(scale=2.0),
        mu2=rng.normal(scale=2.0),
        sigma2=rng.uniform(sigma_lo, sigma_hi),
    )
    u = rng.uniform(0.05, 0.95)
    return model, obs, Belief(np.array([u, 1.0 - u]))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
