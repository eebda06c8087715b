import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_pmf(rng, shape, alpha=1.0, floor=0.0):
    p = rng.dirichlet(np.full(int(np.prod(shape)), alpha)).reshape(shape) + floor
    return p / p.sum()


def random_channel(rng, n_in, n_out, alpha=1.0):
    return rng.dirichlet(np.full(n_out, alpha), size=n_in)
