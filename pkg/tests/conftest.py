"""Shared fixtures and samplers for the test suite."""

import numpy as np
import pytest

from cpsplit import fields


def sample_positions(rng, n, r_min=0.3, r_max=2.0, z_max=1.0):
    """Random positions with cylindrical radius bounded away from the axis.

    The inverse-radius potential is singular on the x3 axis, so every
    problem is probed on a common annular region where all three are
    smooth.
    """
    r = rng.uniform(r_min, r_max, size=n)
    phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
    z = rng.uniform(-z_max, z_max, size=n)
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


def sample_velocities(rng, n, scale=0.25):
    return rng.uniform(-scale, scale, size=(n, 3))


@pytest.fixture(params=fields.PROBLEM_NAMES)
def builtin(request):
    return fields.builtin_problem(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(20260821)
