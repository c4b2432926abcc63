import numpy as np
import pytest
from hypothesis import HealthCheck, settings

# Numerical examples can be individually slow; hypothesis deadlines are
# disabled so CI jitter never turns into flakes.
settings.register_profile(
    "numeric", deadline=None, max_examples=50,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("numeric")


@pytest.fixture
def rng():
    return np.random.default_rng(20260814)
