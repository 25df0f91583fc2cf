import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from spinbroadcast.model import EnvSpin

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@st.composite
def env_spins(draw):
    return EnvSpin(
        draw(st.floats(0.0, 1.0)),
        draw(st.floats(0.0, 2 * np.pi, exclude_max=True)),
        draw(st.floats(0.0, np.pi)),
        draw(st.floats(0.0, 2 * np.pi, exclude_max=True)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
