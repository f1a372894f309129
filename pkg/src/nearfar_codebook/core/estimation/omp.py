"""
Pilot observation model and sparse channel recovery by orthogonal matching pursuit.
"""

import math
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import qr, solve_triangular

from ..array.geometry import ArrayGeometry
from ..config import StoppingRule
from ..errors import (
    DimensionMismatch,
    IndexOutOfRange,
    NoProgress,
    NonPositiveParameter,
    PilotBudgetExceeded,
    ZeroReference,
)
from ..states import Dictionary, MeasurementMatrix, SparseEstimate

# Correlations at or below this fraction of ||y|| count as numerical zero
CORRELATION_FLOOR = 1e-12

# Pivoted-QR diagonal ratio below which a support is treated as rank deficient
RANK_TOL = 1e-10

NOISE_FLOOR_MARGIN = 1.1


def build_measurement(geom: ArrayGeometry, pilot_count: int, rng: Optional[np.random.Generator] = None, identity: bool = False) -> MeasurementMatrix:
    """
    Pilot combining matrix with unit-norm rows.

    Args:
        geom: Array geometry (N elements)
        pilot_count: Number of pilot observations P
        rng: Random generator for the random-phase rows
        identity: Use the first P rows of the identity instead of random phases

    Raises:
        PilotBudgetExceeded: if pilot_count > N
    """
    num_elements = geom.num_elements
    if pilot_count < 1:
        raise NonPositiveParameter(f"pilot_count must be >= 1, got {pilot_count}")
    if pilot_count > num_elements:
        raise PilotBudgetExceeded(f"pilot_count {pilot_count} exceeds N = {num_elements}")

    if identity:
        return MeasurementMatrix(phi=np.eye(num_elements, dtype=complex)[:pilot_count])

    if rng is None:
        raise ValueError("random measurement needs an rng")
    theta = rng.uniform(0.0, 2.0 * math.pi, size=(pilot_count, num_elements))
    return MeasurementMatrix(phi=np.exp(1j * theta) / math.sqrt(num_elements))


def observe(m: MeasurementMatrix, h: np.ndarray, noise_sigma: float, rng: np.random.Generator) -> np.ndarray:
    """y = phi h + w with w circular complex Gaussian of per-entry variance noise_sigma^2"""
    h = np.asarray(h)
    if h.ndim != 1 or h.shape[0] != m.phi.shape[1]:
        raise DimensionMismatch(f"channel of shape {h.shape} does not match phi of shape {m.phi.shape}")
    if noise_sigma < 0:
        raise NonPositiveParameter(f"noise_sigma must be >= 0, got {noise_sigma}")

    y = m.phi @ h
    if noise_sigma > 0:
        noise = rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)
        y = y + noise_sigma * noise / math.sqrt(2.0)
    return y


def observation_snr(m: MeasurementMatrix, h: np.ndarray, noise_sigma: float) -> float:
    """||phi h||^2 / (P sigma^2)"""
    signal = float(np.linalg.norm(m.phi @ h) ** 2)
    if noise_sigma == 0:
        return math.inf
    return signal / (m.pilot_count * noise_sigma ** 2)


def noise_matched_stopping(y: np.ndarray, noise_sigma: float, max_atoms: int) -> StoppingRule:
    """Stop once ||residual||^2 / P <= 1.1 sigma^2"""
    y_norm = float(np.linalg.norm(y))
    if y_norm == 0.0 or noise_sigma == 0.0:
        return StoppingRule(max_atoms=max_atoms, residual_tol=0.0)
    tol = math.sqrt(NOISE_FLOOR_MARGIN * len(y)) * noise_sigma / y_norm
    return StoppingRule(max_atoms=max_atoms, residual_tol=tol)


def _qr_refit(columns: np.ndarray, y: np.ndarray) -> Tuple[Optional[np.ndarray], int]:
    """Least squares on the support via pivoted QR; returns (coefficients or None, rank)"""
    q, r, piv = qr(columns, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > RANK_TOL * diag[0])) if diag.size and diag[0] > 0 else 0
    if rank < columns.shape[1]:
        return None, rank
    z = solve_triangular(r, q.conj().T @ y)
    coefficients = np.empty_like(z)
    coefficients[piv] = z
    return coefficients, rank


def omp(y: np.ndarray, sensing: np.ndarray, stopping: StoppingRule) -> SparseEstimate:
    """
    Orthogonal matching pursuit.

    Each iteration selects the unused column with the largest |correlation| with the
    residual (ties go to the lowest index), refits all coefficients on the support by
    least squares and stops at max_atoms atoms or ||r|| / ||y|| <= residual_tol.
    Columns that would make the support rank deficient are skipped.

    Args:
        y: Observations, length P
        sensing: P x M matrix, columns normalized internally
        stopping: Stopping rule

    Returns:
        SparseEstimate with coefficients in the scale of the given sensing columns

    Raises:
        DimensionMismatch: if y and sensing disagree
        NoProgress: if no atom can be selected for a nonzero y
    """
    y = np.asarray(y, dtype=complex)
    sensing = np.asarray(sensing)
    if sensing.ndim != 2 or y.ndim != 1 or sensing.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"observations of shape {y.shape} do not match sensing of shape {sensing.shape}")

    p, m = sensing.shape
    y_norm = float(np.linalg.norm(y))
    if y_norm == 0.0:
        return SparseEstimate(support=[], coefficients=np.zeros(0, dtype=complex), residual_norms=[0.0])

    norms = np.linalg.norm(sensing, axis=0)
    available = norms > 0
    safe_norms = np.where(available, norms, 1.0)
    normalized = sensing / safe_norms

    max_atoms = min(stopping.max_atoms, p, m)
    floor = CORRELATION_FLOOR * y_norm

    support: List[int] = []
    coefficients = np.zeros(0, dtype=complex)
    residual = y
    history = [y_norm]

    while len(support) < max_atoms and history[-1] > stopping.residual_tol * y_norm:
        correlation = np.abs(normalized.conj().T @ residual)
        correlation[~available] = -1.0
        chosen = None
        for idx in np.argsort(-correlation, kind="stable"):
            if correlation[idx] <= floor:
                break
            candidate_coefficients, _ = _qr_refit(normalized[:, support + [int(idx)]], y)
            if candidate_coefficients is None:
                available[idx] = False
                continue
            chosen = int(idx)
            coefficients = candidate_coefficients
            break

        if chosen is None:
            if not support:
                raise NoProgress(f"no atom correlates with the observations (||y|| = {y_norm:.3e})")
            break

        support.append(chosen)
        available[chosen] = False
        residual = y - normalized[:, support] @ coefficients
        history.append(float(np.linalg.norm(residual)))

    return SparseEstimate(
        support=support,
        coefficients=coefficients / norms[support] if support else coefficients,
        residual_norms=history,
    )


def reconstruct(dictionary: Dictionary, est: SparseEstimate) -> np.ndarray:
    """h_hat = sum of coefficient * atom over the support"""
    if any(i < 0 or i >= dictionary.size for i in est.support):
        raise IndexOutOfRange(f"support {est.support} out of range for {dictionary.size} atoms")
    if not est.support:
        return np.zeros(dictionary.num_elements, dtype=complex)
    return dictionary.atoms[:, est.support] @ est.coefficients


def nmse(h_hat: np.ndarray, h: np.ndarray) -> float:
    """||h_hat - h||^2 / ||h||^2 (Frobenius for matrices)"""
    reference = float(np.linalg.norm(h) ** 2)
    if reference == 0.0:
        raise ZeroReference("NMSE reference has zero energy")
    return float(np.linalg.norm(np.asarray(h_hat) - np.asarray(h)) ** 2) / reference


class ChannelEstimator:
    """
    Binds a measurement matrix to a dictionary and caches the sensing matrix phi A.
    """

    def __init__(self, measurement: MeasurementMatrix, dictionary: Dictionary):
        if measurement.phi.shape[1] != dictionary.num_elements:
            raise DimensionMismatch(
                f"phi has {measurement.phi.shape[1]} columns, dictionary has {dictionary.num_elements} rows"
            )
        self.measurement = measurement
        self.dictionary = dictionary
        self.sensing = measurement.phi @ dictionary.atoms

    def estimate(self, y: np.ndarray, stopping: StoppingRule) -> SparseEstimate:
        est = omp(y, self.sensing, stopping)
        est.dictionary_kind = self.dictionary.kind
        return est

    def recover(self, y: np.ndarray, noise_sigma: float, max_atoms: int) -> np.ndarray:
        """Channel estimate with the noise-matched stopping rule"""
        est = self.estimate(y, noise_matched_stopping(y, noise_sigma, max_atoms))
        return reconstruct(self.dictionary, est)
