"""Shared fixtures: the small instances most suites run against."""

import math

import pytest

from topm import make_canonical_instance, make_classic_instance


@pytest.fixture(scope="session")
def classic42():
    """The hard K=4, m=2, omega=pi/6 instance (min gap 1 - cos(pi/6))."""
    return make_classic_instance(4, 2, math.pi / 6, sigma=0.5)


@pytest.fixture(scope="session")
def canonical2():
    """Two-arm noiseless-friendly instance with means (1, 0)."""
    return make_canonical_instance([1.0, 0.0], sigma=0.5)
