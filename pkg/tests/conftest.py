import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "ci", deadline=None, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


@pytest.fixture
def gen():
    """Factory for deterministic generators keyed by an integer."""
    def make(seed: int) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(seed))
    return make
