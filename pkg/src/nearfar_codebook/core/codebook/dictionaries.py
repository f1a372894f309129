"""
Analytic codebooks over the UPA: oversampled DFT (angular), polar-domain and
wavenumber-domain dictionaries. Every column is unit norm; grid_meta keeps the
physical parameters of each column.
"""

import math
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..array.geometry import ArrayGeometry, rayleigh_distance
from ..channel.model import spherical_steering
from ..states import Dictionary, DictionaryKind

# Columns per block when forming Gram matrices
_GRAM_BLOCK = 512


def _spatial_frequencies(count: int, oversampling: int) -> np.ndarray:
    """count * oversampling points spaced 1 / (count * oversampling) over [-1/2, 1/2)"""
    total = count * oversampling
    return (np.arange(total) - total // 2) / total


def _axis_responses(count: int, frequencies: np.ndarray) -> np.ndarray:
    """1-D responses exp(-i 2 pi psi (r - (count - 1) / 2)) / sqrt(count), shape (count, len(psi))"""
    offsets = np.arange(count) - (count - 1) / 2.0
    return np.exp(-2j * np.pi * np.outer(offsets, frequencies)) / math.sqrt(count)


def _kron_columns(vx: np.ndarray, vy: np.ndarray) -> np.ndarray:
    """Column (a * My + b) = kron(vx[:, a], vy[:, b])"""
    rows, mx = vx.shape
    cols, my = vy.shape
    return np.einsum("ia,jb->ijab", vx, vy).reshape(rows * cols, mx * my)


def _direction_from_cosines(u_x: float, u_y: float) -> Tuple[Optional[float], Optional[float]]:
    """(azimuth, elevation) for visible direction cosines, (None, None) otherwise"""
    if u_x * u_x + u_y * u_y > 1.0 + 1e-12:
        return None, None
    u_z = math.sqrt(max(0.0, 1.0 - u_x * u_x - u_y * u_y))
    elevation = math.asin(max(-1.0, min(1.0, u_y)))
    azimuth = math.atan2(u_x, u_z)
    return azimuth, elevation


def _angular_grid(geom: ArrayGeometry, oversampling: int) -> Tuple[np.ndarray, List[Dict[str, Any]]]:
    psi_x = _spatial_frequencies(geom.rows, oversampling)
    psi_y = _spatial_frequencies(geom.cols, oversampling)
    atoms = _kron_columns(_axis_responses(geom.rows, psi_x), _axis_responses(geom.cols, psi_y))

    scale = geom.wavelength / geom.element_spacing
    meta = []
    for px in psi_x:
        for py in psi_y:
            u_x, u_y = float(px * scale), float(py * scale)
            azimuth, elevation = _direction_from_cosines(u_x, u_y)
            meta.append({"u_x": u_x, "u_y": u_y, "azimuth": azimuth, "elevation": elevation})
    return atoms, meta


def dft_codebook(geom: ArrayGeometry, oversampling: int = 1) -> Dictionary:
    """
    Kronecker product of row and column DFT grids with oversampling^2 * N columns.

    With oversampling 1 the matrix is unitary. Column directions are stored as
    direction cosines (u_x, u_y); azimuth/elevation are None for invisible beams.
    """
    if oversampling < 1:
        raise ValueError(f"oversampling must be >= 1, got {oversampling}")
    atoms, meta = _angular_grid(geom, oversampling)
    return Dictionary(atoms=atoms, kind=DictionaryKind.DFT, grid_meta=meta)


def polar_codebook(geom: ArrayGeometry, distance_rings: int = 3, min_distance: Optional[float] = None) -> Dictionary:
    """
    Polar-domain codebook: the DFT grid (far field, r = inf) followed by one block
    of N spherical-wave columns per ring at r_s = max(d_R / s, min_distance).

    Args:
        geom: Array geometry
        distance_rings: Number of finite-distance rings
        min_distance: Smallest ring radius in meters, default 0.05 * d_R

    Returns:
        Dictionary with N * (distance_rings + 1) columns
    """
    if distance_rings < 0:
        raise ValueError(f"distance_rings must be >= 0, got {distance_rings}")
    d_r = rayleigh_distance(geom)
    if min_distance is None:
        min_distance = 0.05 * d_r

    far_atoms, far_meta = _angular_grid(geom, 1)
    blocks = [far_atoms]
    meta = [dict(m, distance=math.inf, ring=0) for m in far_meta]

    for s in range(1, distance_rings + 1):
        radius = max(d_r / s, min_distance)
        block = np.empty_like(far_atoms)
        for j, m in enumerate(far_meta):
            u_x, u_y = m["u_x"], m["u_y"]
            norm = math.hypot(u_x, u_y)
            if norm > 1.0:
                # invisible beam: focus on the visible horizon along the same bearing
                u_x, u_y = u_x / norm, u_y / norm
            u_z = math.sqrt(max(0.0, 1.0 - u_x * u_x - u_y * u_y))
            source = geom.origin_array + radius * np.array([u_x, u_y, u_z])
            block[:, j] = spherical_steering(geom, source)
            meta.append(dict(m, distance=radius, ring=s))
        blocks.append(block)

    return Dictionary(atoms=np.hstack(blocks), kind=DictionaryKind.POLAR, grid_meta=meta)


def wavenumber_dictionary(geom: ArrayGeometry, include_evanescent: bool = False, oversampling: int = 1) -> Dictionary:
    """
    Sampled plane waves exp(i (k_x x + k_y y)) / sqrt(N) on the lattice
    k_x = 2 pi l_x / (o L_x), k_y = 2 pi l_y / (o L_y) with L_x = rows * spacing,
    L_y = cols * spacing and o the oversampling factor.

    Only lattice points inside the propagating disk (l_x lambda / (o L_x))^2 + (l_y lambda / (o L_y))^2 <= 1
    are kept (plus one ring outside when include_evanescent is set). Indices are taken from one
    period per axis, so with oversampling 1 distinct columns are orthogonal on the element grid.
    Oversampling 2 gives a redundant lattice whose propagating columns span every plane wave
    on arrays with spacing lambda / 2.
    """
    if oversampling < 1:
        raise ValueError(f"oversampling must be >= 1, got {oversampling}")
    length_x = oversampling * geom.rows * geom.element_spacing
    length_y = oversampling * geom.cols * geom.element_spacing
    l_x = np.arange(oversampling * geom.rows) - (oversampling * geom.rows) // 2
    l_y = np.arange(oversampling * geom.cols) - (oversampling * geom.cols) // 2

    outer_radius = 1.0 + oversampling * geom.wavelength / min(length_x, length_y) if include_evanescent else 1.0

    positions = geom.local_positions()
    columns = []
    meta = []
    for lx in l_x:
        for ly in l_y:
            rho = math.hypot(lx * geom.wavelength / length_x, ly * geom.wavelength / length_y)
            if rho > outer_radius + 1e-12:
                continue
            k_x = 2.0 * math.pi * lx / length_x
            k_y = 2.0 * math.pi * ly / length_y
            phase = k_x * positions[:, 0] + k_y * positions[:, 1]
            columns.append(np.exp(1j * phase) / math.sqrt(geom.num_elements))
            meta.append({
                "l_x": int(lx),
                "l_y": int(ly),
                "k_x": k_x,
                "k_y": k_y,
                "evanescent": bool(rho > 1.0 + 1e-12),
            })

    return Dictionary(atoms=np.stack(columns, axis=1), kind=DictionaryKind.WAVENUMBER, grid_meta=meta)


def coherence(dictionary: Dictionary) -> float:
    """Largest |<a_i, a_j>| over distinct columns"""
    atoms = dictionary.atoms
    m = atoms.shape[1]
    if m < 2:
        raise ValueError("coherence needs at least two columns")

    best = 0.0
    for start in range(0, m, _GRAM_BLOCK):
        stop = min(start + _GRAM_BLOCK, m)
        gram = np.abs(atoms[:, start:stop].conj().T @ atoms)
        gram[np.arange(stop - start), np.arange(start, stop)] = 0.0
        best = max(best, float(gram.max()))
    return best
