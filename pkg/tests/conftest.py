"""Shared fixtures for the FNSLab test suite."""
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from flow.presets import random_smooth, taylor_green
from flow.spectral_core import GridSpec, SpectralField


@pytest.fixture
def grid2d():
    return GridSpec(dim=2, n=32)


@pytest.fixture
def grid3d():
    return GridSpec(dim=3, n=16)


@pytest.fixture
def tg2d(grid2d):
    return taylor_green(grid2d)


@pytest.fixture
def random_velocity(grid2d):
    return random_smooth(grid2d, seed=7)


@pytest.fixture
def random_scalar(grid2d):
    rng = np.random.default_rng(3)
    return SpectralField.from_physical(grid2d, rng.standard_normal(grid2d.shape))


def single_mode(grid, mode, vector=None):
    """Field with one nonzero coefficient at integer mode `mode`"""
    components = 1 if vector is None else grid.dim
    coeffs = np.zeros((components,) + grid.shape, dtype=np.complex128)
    index = tuple(m % grid.n for m in mode)
    if vector is None:
        coeffs[(0,) + index] = 1.0
    else:
        for i, v in enumerate(vector):
            coeffs[(i,) + index] = v
    return SpectralField(grid, coeffs)
