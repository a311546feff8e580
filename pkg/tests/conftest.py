import os

import pytest
from hypothesis import HealthCheck, settings

from cocycle_lab.groups import FreeGroup, FreeProductOfCyclics, IntegerLine
from cocycle_lab.measures import simple_random_walk

settings.register_profile("ci", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))


@pytest.fixture
def f2():
    return FreeGroup(2)


@pytest.fixture
def srw(f2):
    return simple_random_walk(f2)


@pytest.fixture
def mixed():
    return FreeProductOfCyclics([3, 4, 0])


@pytest.fixture
def line():
    return IntegerLine()
