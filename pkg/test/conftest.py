import os
import sys

import numpy as np
import pytest

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from nearfar_codebook.core.array.geometry import build_upa  # noqa: E402

WAVELENGTH = 0.01


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def geom4():
    """4 x 4 half-wavelength UPA"""
    return build_upa(4, 4, WAVELENGTH / 2, WAVELENGTH)


@pytest.fixture
def geom8():
    """8 x 8 half-wavelength UPA (desk scale)"""
    return build_upa(8, 8, WAVELENGTH / 2, WAVELENGTH)


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def crandn(rng: np.random.Generator, *shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
