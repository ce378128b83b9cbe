import math

import numpy as np
import pytest

from sparsech import Field, PhysicsParams, SpaceTimeField, TimeGrid, build_basis


def smooth_coeffs(rng, shape, amplitude=1.0, decay=0.5):
    k = np.indices(shape).sum(axis=0)
    return amplitude * rng.standard_normal(shape) * np.exp(-decay * k)


def smooth_control(rng, basis, times, amplitude=1.0):
    left = np.asarray(times)[:-1].reshape((-1,) + (1,) * basis.dim)
    w1, w2 = rng.uniform(0.5, 3.0, size=2)
    a = smooth_coeffs(rng, basis.shape, amplitude)
    b = smooth_coeffs(rng, basis.shape, amplitude)
    return SpaceTimeField(basis, times, a * np.cos(w1 * left) + b * np.sin(w2 * left))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def basis1():
    return build_basis(1, 2 * math.pi, 32)


@pytest.fixture(scope="session")
def basis2():
    return build_basis(2, (math.pi, 2.0), (8, 6))


@pytest.fixture(scope="session")
def grid():
    return TimeGrid(1.0, 100)


@pytest.fixture(scope="session")
def physics():
    return PhysicsParams()


@pytest.fixture
def small_state(basis1, grid, physics):
    """A moderately nonlinear trajectory on the 1D test basis."""
    r = np.random.default_rng(7)
    phi0 = Field(basis1, smooth_coeffs(r, basis1.shape, 0.3))
    w0 = Field(basis1, smooth_coeffs(r, basis1.shape, 0.2))
    u = smooth_control(r, basis1, grid.nodes)
    return u, phi0, w0


# one PASS/FAIL line per acceptance criterion, shown in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
