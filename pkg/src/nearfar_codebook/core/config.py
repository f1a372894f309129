import math
import os
from typing import List, Literal, Optional, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

load_dotenv()

DEFAULT_SEED = int(os.getenv("NFC_SEED", 2024))
DEFAULT_WORKERS = int(os.getenv("NFC_WORKERS", 1))

# Offset between the evaluation seed and the codebook training split
TRAINING_SEED_OFFSET = 1_000_000

ESTIMATION_METHODS = ("omp_angular", "omp_wavenumber", "omp_polar")
CODEBOOK_METHODS = ("dft", "polar", "regression", "regression_unprojected")
BASELINE_METHODS = ("cm_mf", "fully_digital")
KNOWN_METHODS = ESTIMATION_METHODS + CODEBOOK_METHODS + BASELINE_METHODS


class ClusterConfig(BaseModel):
    """Clustered multipath profile shared by every UE"""
    model_config = ConfigDict(frozen=True)

    clusters: int = Field(default=4, ge=1)
    rays_per_cluster: int = Field(default=5, ge=1)
    angular_spread: float = Field(default=math.radians(5.0), ge=0.0, description="Laplacian ray spread, radians")
    per_cluster_power: Optional[Tuple[float, ...]] = None
    power_decay: float = Field(default=1.0, ge=0.0, description="Exponential decay per cluster when weights are not given")
    fading: bool = Field(default=True, description="Complex Gaussian ray gains; False forces deterministic gains")

    @model_validator(mode="after")
    def _check_weights(self):
        if self.per_cluster_power is not None:
            weights = self.per_cluster_power
            if len(weights) != self.clusters:
                raise ValueError(f"per_cluster_power needs {self.clusters} weights, got {len(weights)}")
            if any(w < 0 for w in weights):
                raise ValueError("per_cluster_power weights must be nonnegative")
            if abs(sum(weights) - 1.0) > 1e-9:
                raise ValueError(f"per_cluster_power must sum to 1, got {sum(weights)}")
        return self

    @property
    def weights(self) -> Tuple[float, ...]:
        if self.per_cluster_power is not None:
            return tuple(self.per_cluster_power)
        raw = [math.exp(-self.power_decay * c) for c in range(self.clusters)]
        total = sum(raw)
        return tuple(w / total for w in raw)

    @property
    def num_paths(self) -> int:
        return self.clusters * self.rays_per_cluster


class KsvdConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    atom_count: int = Field(ge=1)
    sparsity: int = Field(default=8, ge=1)
    max_iters: int = Field(default=30, ge=1)
    nmse_threshold: float = Field(default=1e-3, ge=0.0)
    seed: int = DEFAULT_SEED

    @model_validator(mode="after")
    def _check_sparsity(self):
        if self.sparsity > self.atom_count:
            raise ValueError(f"sparsity {self.sparsity} exceeds atom_count {self.atom_count}")
        return self


class StoppingRule(BaseModel):
    """OMP stops at `max_atoms` atoms or when ||residual|| / ||y|| <= residual_tol"""
    model_config = ConfigDict(frozen=True)

    max_atoms: int = Field(ge=1)
    residual_tol: float = Field(default=0.0, ge=0.0)


class ScenarioConfig(BaseModel):
    """One Monte Carlo scenario: geometry, UE mix, channel profile, pipeline and methods"""
    model_config = ConfigDict(frozen=True)

    scenario_id: str = "custom"

    # Geometry
    rows: int = Field(default=32, ge=1)
    cols: int = Field(default=32, ge=1)
    spacing_over_lambda: float = Field(default=0.5, gt=0.0)
    carrier_wavelength_m: float = Field(default=0.01, gt=0.0)

    # UEs, radial bounds as multiples of the Rayleigh distance
    near_field_ues: int = Field(default=4, ge=0)
    far_field_ues: int = Field(default=12, ge=0)
    near_radial_bounds: Tuple[float, float] = (0.05, 0.95)
    far_radial_bounds: Tuple[float, float] = (1.5, 10.0)

    # Channel profile
    clusters: int = Field(default=4, ge=1)
    rays_per_cluster: int = Field(default=5, ge=1)
    angular_spread_deg: float = Field(default=5.0, ge=0.0)
    power_decay: float = Field(default=1.0, ge=0.0)

    # Monte Carlo
    snr_grid_db: List[float] = Field(default_factory=lambda: [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0])
    trials: int = Field(default=500, ge=1)
    seed: int = DEFAULT_SEED
    workers: int = Field(default=DEFAULT_WORKERS, ge=1)
    power_budget: float = Field(default=1.0, gt=0.0)

    # Pipeline
    methods: List[str] = Field(default_factory=lambda: ["dft", "polar", "regression", "cm_mf"])
    precoding: Literal["beam_sweep", "hybrid"] = "beam_sweep"
    feedback_type: Literal["type1", "type2"] = "type2"
    estimation: bool = True
    estimation_dictionary: Literal["wavenumber", "dft", "polar"] = "wavenumber"
    pilot_count: Optional[int] = Field(default=None, ge=1)
    max_atoms: Optional[int] = Field(default=None, ge=1)
    report_size: int = Field(default=4, ge=1)
    # reported codewords overlap each other by at most this much; 1.0 reports the plain top-L
    report_max_coherence: float = Field(default=0.5, ge=0.0, le=1.0)
    n_rf: Optional[int] = Field(default=None, ge=1)
    analog_selection: Literal["global", "per_ue"] = "global"
    regularized_digital: bool = False
    project_learned: bool = True
    compare_projection: bool = False

    # Codebooks
    dft_oversampling: int = Field(default=1, ge=1)
    polar_rings: int = Field(default=3, ge=0)
    polar_min_distance_ratio: float = Field(default=0.05, gt=0.0)
    include_evanescent: bool = False
    wavenumber_oversampling: int = Field(default=2, ge=1)

    # Learned codebook
    training_samples: int = Field(default=2000, ge=1)
    train_on_estimates: bool = True
    training_snr_db: float = 20.0
    atom_count: Optional[int] = Field(default=None, ge=1)
    sparsity: int = Field(default=8, ge=1)
    ksvd_max_iters: int = Field(default=30, ge=1)
    nmse_threshold: float = Field(default=1e-3, ge=0.0)
    retrain_decline_fraction: float = Field(default=0.2, gt=0.0, lt=1.0)

    @field_validator("snr_grid_db")
    @classmethod
    def _check_snr_grid(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("snr_grid_db must not be empty")
        return value

    @field_validator("methods")
    @classmethod
    def _check_methods(cls, value: List[str]) -> List[str]:
        if not value:
            raise ValueError("methods must not be empty")
        unknown = [m for m in value if m not in KNOWN_METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; expected a subset of {list(KNOWN_METHODS)}")
        if len(set(value)) != len(value):
            raise ValueError(f"duplicate methods in {value}")
        return value

    @field_validator("near_radial_bounds", "far_radial_bounds")
    @classmethod
    def _check_bounds(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        low, high = value
        if not 0.0 < low <= high:
            raise ValueError(f"radial bounds must satisfy 0 < low <= high, got {value}")
        return value

    @model_validator(mode="after")
    def _check_counts(self):
        if self.near_field_ues + self.far_field_ues < 1:
            raise ValueError("at least one UE is required")
        if self.pilot_count is not None and self.pilot_count > self.num_elements:
            raise ValueError(f"pilot_count {self.pilot_count} exceeds N = {self.num_elements}")
        if self.n_rf is not None and self.n_rf < self.num_ues:
            raise ValueError(f"n_rf {self.n_rf} must be at least the number of UEs {self.num_ues}")
        return self

    @property
    def num_ues(self) -> int:
        return self.near_field_ues + self.far_field_ues

    @property
    def num_elements(self) -> int:
        return self.rows * self.cols

    @property
    def spacing_m(self) -> float:
        return self.spacing_over_lambda * self.carrier_wavelength_m

    @property
    def resolved_pilot_count(self) -> int:
        return self.pilot_count or max(1, self.num_elements // 2)

    @property
    def resolved_max_atoms(self) -> int:
        """Configured support size, default 2 * clusters * rays capped at half the pilots"""
        if self.max_atoms is not None:
            return min(self.max_atoms, self.resolved_pilot_count)
        return max(1, min(2 * self.clusters * self.rays_per_cluster, self.resolved_pilot_count // 2))

    @property
    def resolved_n_rf(self) -> int:
        return self.n_rf or self.num_ues

    @property
    def estimation_methods(self) -> List[str]:
        return [m for m in self.resolved_methods if m in ESTIMATION_METHODS]

    @property
    def precoding_methods(self) -> List[str]:
        return [m for m in self.resolved_methods if m not in ESTIMATION_METHODS]

    def cluster_config(self) -> ClusterConfig:
        return ClusterConfig(
            clusters=self.clusters,
            rays_per_cluster=self.rays_per_cluster,
            angular_spread=math.radians(self.angular_spread_deg),
            power_decay=self.power_decay,
        )

    def ksvd_config(self) -> KsvdConfig:
        atom_count = self.atom_count or self.num_elements
        return KsvdConfig(
            atom_count=atom_count,
            sparsity=min(self.sparsity, atom_count),
            max_iters=self.ksvd_max_iters,
            nmse_threshold=self.nmse_threshold,
            seed=self.seed + TRAINING_SEED_OFFSET,
        )

    def desk(self) -> "ScenarioConfig":
        """Laptop-scale version: 8 x 8 array, 4 UEs in the same near/far proportion, at most 50 trials"""
        total = 4
        desk_elements = 64
        near = round(total * self.near_field_ues / self.num_ues)

        def fits(value: Optional[int], low: int) -> Optional[int]:
            return value if value is not None and low <= value <= desk_elements else None

        return self.updated(
            rows=8,
            cols=8,
            near_field_ues=near,
            far_field_ues=total - near,
            trials=min(self.trials, 50),
            training_samples=min(self.training_samples, 500),
            pilot_count=fits(self.pilot_count, 1),
            n_rf=fits(self.n_rf, total),
            atom_count=fits(self.atom_count, 1),
        )

    def updated(self, **changes) -> "ScenarioConfig":
        """Validated copy with `changes` applied"""
        return ScenarioConfig.model_validate({**self.model_dump(), **changes})

    @property
    def resolved_methods(self) -> List[str]:
        """Configured methods, plus regression_unprojected when compare_projection is set"""
        methods = list(self.methods)
        if self.compare_projection and "regression" in methods and "regression_unprojected" not in methods:
            methods.insert(methods.index("regression") + 1, "regression_unprojected")
        return methods
