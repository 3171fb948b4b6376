"""Shared fixtures and the acceptance summary hook."""

import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rissr.channels import ChannelSet, generate
from rissr.core import ScenarioConfig, make_constellation

settings.register_profile(
    "repo", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")

# filled by tests/test_acceptance.py, printed after the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_channels(rng, M, N, scale=1.0):
    return ChannelSet(
        h_p=scale * crandn(rng, M),
        h_s=scale * crandn(rng, M),
        H=crandn(rng, N, M),
        g_p=crandn(rng, N),
        g_s=crandn(rng, N),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def qpsk():
    return make_constellation("QPSK")


@pytest.fixture(scope="session")
def bpsk():
    return make_constellation("BPSK")


@pytest.fixture
def scenario():
    return ScenarioConfig(M=4, N=16, P_t=1.0, delta=0.5, seed=7)


@pytest.fixture
def drawn(scenario):
    return generate(scenario, 0)


@pytest.fixture(autouse=True)
def _quiet_baseline_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="scheme II ended below")
        yield
