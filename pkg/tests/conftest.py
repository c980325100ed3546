import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line[1])


def random_chain(rng, n, floor=0.02):
    P = rng.dirichlet(np.ones(n), size=n) * (1 - floor) + floor / n
    return P


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
