import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("gkflow", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("gkflow")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spd(rng, n, shift=0.5):
    A = rng.standard_normal((n, n))
    return A @ A.T + shift * np.eye(n)


def random_skew(rng, n):
    A = rng.standard_normal((n, n))
    return A - A.T
