import os
import random

import pytest
from hypothesis import HealthCheck, settings

from cotstar import geometry as geo
from cotstar.calculus_ops import Calculus

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE = {}


@pytest.fixture(scope="session")
def s2_9():
    return geo.sphere_stereographic(9)


@pytest.fixture(scope="session")
def s2_7():
    return geo.sphere_stereographic(7)


@pytest.fixture(scope="session")
def rand_7():
    return geo.random_connection(2, 7, random.Random(5), maxdeg=2)


@pytest.fixture(scope="session")
def calc_s2_2(s2_7):
    return Calculus(s2_7, lambda_order=2)


@pytest.fixture(scope="session")
def calc_rand_2(rand_7):
    return Calculus(rand_7, lambda_order=2)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            ok, msg = ACCEPTANCE[n]
            terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {msg}")
