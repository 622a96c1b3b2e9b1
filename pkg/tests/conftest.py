import math

import numpy as np
import pytest

from whichpath_sim.interferometer import Geometry


@pytest.fixture
def default_geometry():
    return Geometry.default()


def random_geometry(rng: np.random.Generator, n: int | None = None, symmetric: bool = False) -> Geometry:
    """Random but physically sensible layout: visible light, sub-mm slits, ~1 m screen."""
    n = int(rng.integers(1, 65)) if n is None else n
    wavelength = rng.uniform(350e-9, 800e-9)
    s = rng.uniform(20e-6, 500e-6)
    L = rng.uniform(0.2, 3.0)
    if symmetric:
        return Geometry.uniform(n, rng.uniform(1e-3, 50e-3), wavelength, s, L)
    xs = np.sort(rng.uniform(-30e-3, 30e-3, size=n))
    xs = np.unique(xs)
    return Geometry(wavelength, s, L, tuple(xs))


@pytest.fixture
def geometry_factory():
    return random_geometry


def fine_geometry(count=401, span=20e-3, s=100e-6):
    """Grid fine enough (0.05 mm) to land on fringe maxima and minima."""
    return Geometry.uniform(count, span, 500e-9, s, 1.0)


PI = math.pi
