"""Shared profiles and a tiny cache so expensive artifacts are built once."""

import numpy as np
import pytest

from bouncing_lab import bouncing, geometry

LENGTH = 2 * np.pi


@pytest.fixture(scope="session")
def profile_k1():
    return geometry.CurvatureProfile.constant(LENGTH, 1.0)


@pytest.fixture(scope="session")
def profile_pert():
    """K = 1 + 0.2 cos s: the non-degenerate three-bounce test profile."""
    return geometry.CurvatureProfile(LENGTH, 1.0, [0.2], [0.0])


@pytest.fixture(scope="session")
def profile_tube():
    """K = 0.55 + 0.12 cos s: two-bounce profile whose Jacobi-Toda branch
    survives the whole strip sweep (fold near eps = 0.16)."""
    return geometry.CurvatureProfile(LENGTH, 0.55, [0.12], [0.0])


@pytest.fixture(scope="session")
def field_k1_n3(profile_k1):
    return bouncing.find_bjf(profile_k1, 3)


@pytest.fixture(scope="session")
def field_pert_n3(profile_pert):
    return bouncing.find_bjf(profile_pert, 3)


@pytest.fixture(scope="session")
def field_tube_n2(profile_tube):
    return bouncing.find_bjf(profile_tube, 2)
