import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lds_lab.kalman import solve_dare, with_steady_state_init
from lds_lab.model_core import JordanSpec, make_jordan_system, scalar_random_walk

settings.register_profile(
    "default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []

FIG1A_BLOCKS = ((1.0, 4), (0.4, 1), (0.4, 1), (0.4, 1))
FIG1B_BLOCKS = ((1.1, 4), (0.4, 1), (0.4, 1), (0.4, 1))


@pytest.fixture
def fig1a_spec():
    return JordanSpec(FIG1A_BLOCKS)


@pytest.fixture
def fig1a_model(fig1a_spec):
    return make_jordan_system(fig1a_spec, sigma_w=1.0, sigma_init=1.0)


@pytest.fixture(scope="session")
def rw_model():
    """q = r = 1 random walk started at the steady-state covariance."""
    return with_steady_state_init(scalar_random_walk(1.0, 1.0))


@pytest.fixture(scope="session")
def rw_filter(rw_model):
    return solve_dare(rw_model)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
