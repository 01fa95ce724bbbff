"""Shared small-scale fixtures.

Module tests run on 64-mode grids with short time grids so the whole suite
stays fast; the acceptance tests build their own desk-scale fixtures.
"""

import numpy as np
import pytest

from singular_drift.spectral import GridSpec, SpectralField, TimeField
from singular_drift.drifts import DriftSpec, generate


@pytest.fixture(scope="session")
def grid64():
    return GridSpec(1, 64, 2.0 * np.pi)


@pytest.fixture(scope="session")
def grid64_2d():
    return GridSpec(2, 64, 2.0 * np.pi)


@pytest.fixture(scope="session")
def rough_drift64():
    """Small-scale certified rough drift: random Fourier, 32 time nodes."""
    spec = DriftSpec(family="random-fourier", seed=42, beta=0.25, eta=0.3,
                     amplitude=0.25)
    grid = GridSpec(1, 64, 2.0 * np.pi)
    return generate(spec, grid, 1.0, 32)


@pytest.fixture(scope="session")
def sine_field(grid64):
    """sin(x) as a spectral field (exact two-mode representation)."""
    x = grid64.axis_points()
    return SpectralField.from_grid(grid64, np.sin(x)[None])


def single_mode(grid, k, amplitude=1.0, component_count=1):
    """amplitude * exp(i k x) placed directly in the coefficients."""
    coeffs = np.zeros((component_count,) + grid.spatial_shape, dtype=complex)
    coeffs[(0,) + ((k % grid.modes_per_axis),) * grid.dimension] = amplitude
    return SpectralField(grid, coeffs, real_flag=False)


def sine_time_field(grid, amplitude, steps, horizon=1.0):
    """Time-constant a*sin(x) drift with `steps` time intervals."""
    x = grid.axis_points()
    node = SpectralField.from_grid(grid, (amplitude * np.sin(x))[None])
    return TimeField.from_nodes([node] * (steps + 1), horizon)
