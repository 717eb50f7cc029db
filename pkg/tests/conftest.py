from fractions import Fraction

import pytest
from hypothesis import settings

from sharedcache.association import Association
from sharedcache.placement import SystemParams, place_exact

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def ex1_params():
    return SystemParams(4, 4, 2, Fraction(2), 4)


@pytest.fixture
def ex1(ex1_params):
    """Four files, four users on two caches split 3/1, M = 2, F = 4, exact placement."""
    return ex1_params, place_exact(ex1_params), Association.from_profile((3, 1))


@pytest.fixture
def ex2_params():
    return SystemParams(4, 4, 2, Fraction(2), 25, beta=Fraction(5, 4))
