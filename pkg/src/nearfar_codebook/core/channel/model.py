"""
Clustered multi-user channels with planar (far-field) and spherical (near-field) wavefronts.

Simplified clustered model: cluster 0 is centered on the UE and its first ray is the
line-of-sight ray, the remaining clusters have central directions uniform over the
front hemisphere. Ray offsets are Laplacian around the cluster center. For a near-field
UE the scatterer clusters sit at distances uniform in [0.05, 1] * d_R and radiate
spherical waves; for a far-field UE every cluster is a pure direction.
"""

import math
from typing import List, Sequence, Tuple

import numpy as np

from ..array.geometry import ArrayGeometry, classify_region, rayleigh_distance
from ..config import ClusterConfig
from ..errors import InconsistentBounds, SourceOnArray
from ..states import ChannelRealization, MultiUserChannel, PathComponent, RegionLabel, UePlacement

SOURCE_EPS = 1e-9

# Scatterer distance range for near-field UEs, as a fraction of d_R
NEAR_SCATTERER_RANGE = (0.05, 1.0)


def direction_vector(azimuth: float, elevation: float) -> np.ndarray:
    """Unit vector; (0, 0) is broadside +z, azimuth turns toward +x, elevation toward +y"""
    return np.array([
        math.cos(elevation) * math.sin(azimuth),
        math.sin(elevation),
        math.cos(elevation) * math.cos(azimuth),
    ])


def direction_angles(vector: Sequence[float]) -> Tuple[float, float]:
    """Inverse of direction_vector for any nonzero vector"""
    u = np.asarray(vector, dtype=float)
    u = u / np.linalg.norm(u)
    elevation = math.asin(float(np.clip(u[1], -1.0, 1.0)))
    azimuth = math.atan2(u[0], u[2])
    return azimuth, elevation


def _wrap_azimuth(angle: float) -> float:
    wrapped = math.remainder(angle, 2.0 * math.pi)
    return math.pi if wrapped == -math.pi else wrapped


def planar_steering(geom: ArrayGeometry, azimuth: float, elevation: float) -> np.ndarray:
    """Unit-norm far-field response, entry n = exp(-i k <p_n, u>) / sqrt(N)"""
    u = direction_vector(azimuth, elevation)
    phase = geom.wavenumber * (geom.local_positions() @ u)
    return np.exp(-1j * phase) / math.sqrt(geom.num_elements)


def spherical_steering(geom: ArrayGeometry, source: Sequence[float]) -> np.ndarray:
    """
    Unit-norm near-field response, entry n = exp(i k (||p_n - s|| - ||s||)) / sqrt(N).
    Since ||p_n - s|| - ||s|| -> -<p_n, u> as ||s|| grows, this converges to
    planar_steering along the source direction.

    Raises:
        SourceOnArray: if the source coincides with an element
    """
    s = np.asarray(source, dtype=float) - geom.origin_array
    p = geom.local_positions()
    dist = np.linalg.norm(p - s, axis=1)
    if dist.min() < SOURCE_EPS:
        raise SourceOnArray(f"source {tuple(source)} lies on element {int(dist.argmin())}")
    r = np.linalg.norm(s)
    # ||p - s|| - ||s|| without cancellation at large r
    path_difference = (np.sum(p * p, axis=1) - 2.0 * (p @ s)) / (dist + r)
    return np.exp(1j * geom.wavenumber * path_difference) / math.sqrt(geom.num_elements)


def path_steering(geom: ArrayGeometry, path: PathComponent) -> np.ndarray:
    if path.is_spherical:
        return spherical_steering(geom, path.point)
    return planar_steering(geom, path.azimuth, path.elevation)


def _front_hemisphere_direction(rng: np.random.Generator) -> np.ndarray:
    # uniform in solid angle: cos(theta) uniform on (0, 1]
    cos_theta = 1.0 - rng.random()
    phi = rng.uniform(-math.pi, math.pi)
    sin_theta = math.sqrt(max(0.0, 1.0 - cos_theta * cos_theta))
    return np.array([sin_theta * math.cos(phi), sin_theta * math.sin(phi), cos_theta])


def sample_ue_placement(
    geom: ArrayGeometry,
    region: RegionLabel,
    radial_bounds: Tuple[float, float],
    rng: np.random.Generator,
) -> UePlacement:
    """
    Draw a UE uniform in solid angle over the front hemisphere and uniform in radius.

    Args:
        geom: Array geometry
        region: Requested region
        radial_bounds: (low, high) distance from the array center in meters
        rng: Random generator

    Raises:
        InconsistentBounds: if the bounds do not lie inside the requested region
    """
    low, high = (float(b) for b in radial_bounds)
    d_r = rayleigh_distance(geom)
    if not 0.0 < low <= high:
        raise InconsistentBounds(f"radial bounds must satisfy 0 < low <= high, got ({low}, {high})")
    if region == RegionLabel.NEAR_FIELD and high > d_r:
        raise InconsistentBounds(f"near-field bounds ({low}, {high}) exceed the Rayleigh distance {d_r}")
    if region == RegionLabel.FAR_FIELD and low < d_r:
        raise InconsistentBounds(f"far-field bounds ({low}, {high}) start inside the Rayleigh distance {d_r}")

    direction = _front_hemisphere_direction(rng)
    radius = rng.uniform(low, high)
    position = geom.origin_array + radius * direction
    label = classify_region(geom, position)
    if label != region:
        raise InconsistentBounds(f"radius {radius} falls in {label.value} field, requested {region.value}")
    return UePlacement(position=tuple(float(v) for v in position), region=region)


def generate_channel(
    geom: ArrayGeometry,
    ue: UePlacement,
    cfg: ClusterConfig,
    rng: np.random.Generator,
) -> ChannelRealization:
    """
    One UE's channel h = sum of gain * steering over clusters x rays, with E[||h||^2] = N.
    """
    n = geom.num_elements
    d_r = rayleigh_distance(geom)
    near = ue.region == RegionLabel.NEAR_FIELD
    spread = cfg.angular_spread / math.sqrt(2.0)

    ue_rel = np.asarray(ue.position, dtype=float) - geom.origin_array
    ue_distance = float(np.linalg.norm(ue_rel))

    paths: List[PathComponent] = []
    h = np.zeros(n, dtype=complex)
    for c, weight in enumerate(cfg.weights):
        if c == 0:
            center_az, center_el = direction_angles(ue_rel)
            center_distance = ue_distance if near else None
        else:
            center_az, center_el = direction_angles(_front_hemisphere_direction(rng))
            center_distance = rng.uniform(*NEAR_SCATTERER_RANGE) * d_r if near else None

        for r in range(cfg.rays_per_cluster):
            if (c == 0 and r == 0) or spread == 0.0:
                azimuth, elevation = center_az, center_el
            else:
                azimuth = _wrap_azimuth(center_az + rng.laplace(0.0, spread))
                elevation = float(np.clip(center_el + rng.laplace(0.0, spread), -math.pi / 2, math.pi / 2))

            amplitude = math.sqrt(n * weight / cfg.rays_per_cluster)
            if cfg.fading:
                gain = amplitude * complex(rng.standard_normal(), rng.standard_normal()) / math.sqrt(2.0)
            else:
                gain = complex(amplitude)

            if center_distance is None:
                path = PathComponent(gain=gain, azimuth=azimuth, elevation=elevation, cluster=c)
            else:
                point = geom.origin_array + center_distance * direction_vector(azimuth, elevation)
                path = PathComponent(gain=gain, point=tuple(float(v) for v in point), cluster=c)
            h += gain * path_steering(geom, path)
            paths.append(path)

    return ChannelRealization(h=h, paths=paths, ue=ue)


def generate_multiuser_channels(
    geom: ArrayGeometry,
    placements: Sequence[UePlacement],
    cfg: ClusterConfig,
    rng: np.random.Generator,
) -> MultiUserChannel:
    """Stack K independent channels; row k of the matrix is h_k^H"""
    if len(placements) < 1:
        raise ValueError("at least one UE placement is required")
    children = rng.spawn(len(placements))
    realizations = [generate_channel(geom, ue, cfg, child) for ue, child in zip(placements, children)]
    matrix = np.stack([real.h.conj() for real in realizations])
    return MultiUserChannel(matrix=matrix, realizations=realizations)
