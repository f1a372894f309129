from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np


class RegionLabel(str, Enum):
    NEAR_FIELD = "near"
    FAR_FIELD = "far"


class DictionaryKind(str, Enum):
    DFT = "dft"
    POLAR = "polar"
    WAVENUMBER = "wavenumber"
    LEARNED = "learned"


#########################
#        CHANNEL        #
#########################

@dataclass(frozen=True)
class PathComponent:
    """One ray: a plane wave from (azimuth, elevation) or a spherical wave from `point`"""
    gain: complex
    azimuth: Optional[float] = None
    elevation: Optional[float] = None
    point: Optional[Tuple[float, float, float]] = None
    cluster: int = 0

    @property
    def is_spherical(self) -> bool:
        return self.point is not None


@dataclass(frozen=True)
class UePlacement:
    position: Tuple[float, float, float]
    region: RegionLabel


@dataclass
class ChannelRealization:
    h: np.ndarray
    paths: List[PathComponent]
    ue: UePlacement


@dataclass
class MultiUserChannel:
    """
    Downlink channel matrix: row k is h_k^H, so UE k receives (H @ f) [k] = h_k^H f.
    """
    matrix: np.ndarray
    realizations: List[ChannelRealization]

    @property
    def num_ues(self) -> int:
        return self.matrix.shape[0]

    @property
    def vectors(self) -> np.ndarray:
        """Channel vectors h_k as columns, shape (N, K)"""
        return self.matrix.conj().T


#########################
#       CODEBOOKS       #
#########################

@dataclass
class Dictionary:
    """Codebook matrix with unit-norm columns and a per-column grid record"""
    atoms: np.ndarray
    kind: DictionaryKind
    grid_meta: List[Dict[str, Any]] = field(default_factory=list)

    def __post_init__(self):
        if self.atoms.ndim != 2 or self.atoms.shape[1] < 1:
            raise ValueError(f"atoms must be an N x M matrix with M >= 1, got shape {self.atoms.shape}")
        if len(self.grid_meta) != self.atoms.shape[1]:
            raise ValueError(f"grid_meta has {len(self.grid_meta)} entries for {self.atoms.shape[1]} atoms")

    @property
    def num_elements(self) -> int:
        return self.atoms.shape[0]

    @property
    def size(self) -> int:
        return self.atoms.shape[1]


@dataclass
class LearnedCodebook:
    dictionary: Dictionary
    sparse_codes: np.ndarray
    history: List[float]

    @property
    def final_nmse(self) -> float:
        return self.history[-1] if self.history else float("nan")


#########################
#      ESTIMATION       #
#########################

@dataclass
class MeasurementMatrix:
    phi: np.ndarray

    @property
    def pilot_count(self) -> int:
        return self.phi.shape[0]


@dataclass
class SparseEstimate:
    support: List[int]
    coefficients: np.ndarray
    dictionary_kind: Optional[DictionaryKind] = None
    residual_norms: List[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.support)


#########################
#       PRECODING       #
#########################

@dataclass
class FeedbackReport:
    ue_index: int
    codeword_indices: List[int]
    amplitudes: np.ndarray

    @property
    def strongest(self) -> int:
        return self.codeword_indices[0]


@dataclass
class PrecodingMatrix:
    f: np.ndarray
    power_budget: float


@dataclass
class HybridPrecoder:
    analog: np.ndarray
    baseband: np.ndarray
    power_budget: float
    codeword_indices: List[int] = field(default_factory=list)

    @property
    def effective(self) -> np.ndarray:
        return self.analog @ self.baseband


@dataclass
class SpectralEfficiency:
    per_ue: np.ndarray
    total: float
