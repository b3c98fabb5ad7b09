import sys
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from capprox.calibration import CalibrationModel
from capprox.config import config_from_dict
from capprox.harness import run_matrix

settings.register_profile("default", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ALPHA, BETA = 84.38, 4.681


@pytest.fixture
def reference_model():
    return CalibrationModel(ALPHA, BETA)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def default_matrix():
    """The full default evaluation matrix, run once per session and timed."""
    t0 = time.perf_counter()
    result = run_matrix(config_from_dict({}))
    result.elapsed = time.perf_counter() - t0
    return result


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
