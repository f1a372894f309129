"""
Uniform planar array geometry and the near/far-field boundary.

The array lies in the x-y plane centered on `origin`, broadside is +z.
Element n = r * cols + c sits at x = (r - (rows-1)/2) * spacing,
y = (c - (cols-1)/2) * spacing, so the row index varies slowest.
"""

import math
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np

from ..errors import NonPositiveParameter
from ..states import RegionLabel

Point3 = Tuple[float, float, float]


@dataclass(frozen=True)
class ArrayGeometry:
    rows: int
    cols: int
    element_spacing: float
    wavelength: float
    origin: Point3 = field(default=(0.0, 0.0, 0.0))

    def __post_init__(self):
        for name in ("rows", "cols", "element_spacing", "wavelength"):
            value = getattr(self, name)
            if not value > 0:
                raise NonPositiveParameter(f"{name} must be positive, got {value}")
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))

    @property
    def num_elements(self) -> int:
        return self.rows * self.cols

    @property
    def aperture(self) -> float:
        """Diagonal of the element footprint"""
        return math.hypot(self.rows - 1, self.cols - 1) * self.element_spacing

    @property
    def wavenumber(self) -> float:
        return 2.0 * math.pi / self.wavelength

    @property
    def origin_array(self) -> np.ndarray:
        return np.asarray(self.origin, dtype=float)

    def local_positions(self) -> np.ndarray:
        """Element positions relative to the array center, shape (N, 3)"""
        x = (np.arange(self.rows) - (self.rows - 1) / 2.0) * self.element_spacing
        y = (np.arange(self.cols) - (self.cols - 1) / 2.0) * self.element_spacing
        xx, yy = np.meshgrid(x, y, indexing="ij")
        return np.stack([xx.ravel(), yy.ravel(), np.zeros(self.num_elements)], axis=1)


def build_upa(rows: int, cols: int, spacing: float, wavelength: float, origin: Sequence[float] = (0.0, 0.0, 0.0)) -> ArrayGeometry:
    """
    Build a uniform planar array.

    Args:
        rows: Number of element rows (x direction)
        cols: Number of element columns (y direction)
        spacing: Element spacing in meters
        wavelength: Carrier wavelength in meters
        origin: Array center

    Returns:
        ArrayGeometry

    Raises:
        NonPositiveParameter: if any size argument is not positive
    """
    return ArrayGeometry(rows=rows, cols=cols, element_spacing=spacing, wavelength=wavelength, origin=tuple(origin))


def element_positions(geom: ArrayGeometry) -> np.ndarray:
    """Absolute element positions, shape (N, 3), row-major"""
    return geom.local_positions() + geom.origin_array


def rayleigh_distance(geom: ArrayGeometry) -> float:
    """2 D^2 / lambda with D the array diagonal"""
    return 2.0 * geom.aperture ** 2 / geom.wavelength


def classify_region(geom: ArrayGeometry, point: Sequence[float]) -> RegionLabel:
    """Points at exactly the Rayleigh distance belong to the far field"""
    distance = float(np.linalg.norm(np.asarray(point, dtype=float) - geom.origin_array))
    if distance < rayleigh_distance(geom):
        return RegionLabel.NEAR_FIELD
    return RegionLabel.FAR_FIELD
