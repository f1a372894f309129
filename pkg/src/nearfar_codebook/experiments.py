"""
Monte Carlo harness: scenario presets, the per-trial pipeline, aggregation and CSV output.

Every trial draws its UE placements and channels from keyed_rng(seed, trial) and its
per-SNR noise from keyed_rng(seed, trial, snr_index + 1), so results do not depend on
the worker count or completion order. The learned codebook is trained once per
scenario from an independent split (seed + TRAINING_SEED_OFFSET) and then frozen.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from .core.array.geometry import ArrayGeometry, build_upa, rayleigh_distance
from .core.channel.model import generate_multiuser_channels, sample_ue_placement
from .core.codebook.dictionaries import dft_codebook, polar_codebook, wavenumber_dictionary
from .core.codebook.ksvd import OfflineCodebookPolicy, ksvd_learn
from .core.config import TRAINING_SEED_OFFSET, ScenarioConfig
from .core.errors import IoFailure, SimulationError, TrialFailure, UnknownPreset
from .core.estimation.omp import ChannelEstimator, build_measurement, nmse, observe
from .core.precoding.precoders import (
    beam_sweep_report,
    cm_mf_precoder,
    fully_digital_zf,
    hybrid_precoder,
    spectral_efficiency,
    type1_precoder,
    type2_precoder,
)
from .core.states import Dictionary, LearnedCodebook, MultiUserChannel, RegionLabel, UePlacement
from .utils.logger import LogCategory, logger
from .utils.rng import keyed_rng

CSV_COLUMNS = ["scenario", "method", "snr_db", "metric", "mean", "stderr", "trials"]

METRIC_NMSE = "nmse"
METRIC_SE = "se"

ESTIMATION_DICTIONARIES = {
    "omp_angular": "dft",
    "omp_wavenumber": "wavenumber",
    "omp_polar": "polar",
}

PRECODING_PRESET_METHODS = {
    "beam_sweep": ["dft", "polar", "regression", "cm_mf"],
    "hybrid": ["dft", "polar", "regression", "fully_digital"],
}

PRESETS: Dict[str, Dict] = {
    "fig2_nmse": {
        "near_field_ues": 8,
        "far_field_ues": 8,
        "methods": ["omp_angular", "omp_wavenumber"],
        "estimation": True,
    },
    "fig4a_sweep": {
        "near_field_ues": 4,
        "far_field_ues": 12,
        "methods": PRECODING_PRESET_METHODS["beam_sweep"],
        "precoding": "beam_sweep",
    },
    "fig4b_hybrid": {
        "near_field_ues": 4,
        "far_field_ues": 12,
        "methods": PRECODING_PRESET_METHODS["hybrid"],
        "precoding": "hybrid",
    },
    "fig5a_near": {
        "near_field_ues": 16,
        "far_field_ues": 0,
        "methods": PRECODING_PRESET_METHODS["hybrid"],
        "precoding": "hybrid",
    },
    "fig5b_far": {
        "near_field_ues": 0,
        "far_field_ues": 16,
        "methods": PRECODING_PRESET_METHODS["hybrid"],
        "precoding": "hybrid",
    },
}


def preset(name: str) -> ScenarioConfig:
    """
    Scenario preset by name; all presets use a 32 x 32 UPA and 4 clusters x 5 rays.

    Raises:
        UnknownPreset: if the name is not one of PRESETS
    """
    if name not in PRESETS:
        raise UnknownPreset(f"unknown preset '{name}'; expected one of {sorted(PRESETS)}")
    return ScenarioConfig(scenario_id=name, rows=32, cols=32, clusters=4, rays_per_cluster=5, **PRESETS[name])


#########################
#        RESULTS        #
#########################

class ResultRow(BaseModel):
    scenario: str
    method: str
    snr_db: float
    metric: str
    mean: float
    stderr: float = Field(ge=0.0)
    trials: int = Field(ge=1)


class ResultTable(BaseModel):
    scenario_id: str = ""
    rows: List[ResultRow] = Field(default_factory=list)
    retrain_recommended: Optional[bool] = None

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame([row.model_dump() for row in self.rows], columns=CSV_COLUMNS)
        return frame.sort_values(["method", "snr_db"], kind="mergesort").reset_index(drop=True)

    def lookup(self, method: str, snr_db: float, metric: Optional[str] = None) -> ResultRow:
        for row in self.rows:
            if row.method == method and row.snr_db == snr_db and (metric is None or row.metric == metric):
                return row
        raise KeyError(f"no row for method={method} snr_db={snr_db} metric={metric}")


def emit_csv(table: ResultTable, path: Union[str, Path], comment: Optional[str] = None) -> Path:
    """
    UTF-8 CSV with header scenario,method,snr_db,metric,mean,stderr,trials, rows sorted
    by (method, snr_db), floats in shortest round-trip precision. An optional comment is
    written first as a '#' line.

    Raises:
        IoFailure: if the file cannot be written
    """
    path = Path(path)
    text = table.to_frame().to_csv(index=False, lineterminator="\n")
    if comment:
        text = "".join(f"# {line}\n" for line in comment.strip().lstrip("# ").splitlines()) + text
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise IoFailure(f"cannot write results to {path}: {e}") from e
    logger.file_written(str(path), details=f"{len(table.rows)} rows")
    return path


#########################
#       SCENARIO        #
#########################

def scenario_geometry(cfg: ScenarioConfig) -> ArrayGeometry:
    return build_upa(cfg.rows, cfg.cols, cfg.spacing_m, cfg.carrier_wavelength_m)


def draw_placements(cfg: ScenarioConfig, geom: ArrayGeometry, rng: np.random.Generator) -> List[UePlacement]:
    """Near-field UEs first, then far-field UEs"""
    d_r = rayleigh_distance(geom)
    near_bounds = tuple(b * d_r for b in cfg.near_radial_bounds)
    far_bounds = tuple(b * d_r for b in cfg.far_radial_bounds)
    placements = [sample_ue_placement(geom, RegionLabel.NEAR_FIELD, near_bounds, rng) for _ in range(cfg.near_field_ues)]
    placements += [sample_ue_placement(geom, RegionLabel.FAR_FIELD, far_bounds, rng) for _ in range(cfg.far_field_ues)]
    return placements


def draw_channels(cfg: ScenarioConfig, geom: ArrayGeometry, rng: np.random.Generator) -> MultiUserChannel:
    placements = draw_placements(cfg, geom, rng)
    return generate_multiuser_channels(geom, placements, cfg.cluster_config(), rng)


def build_dictionary(kind: str, cfg: ScenarioConfig, geom: ArrayGeometry) -> Dictionary:
    if kind == "dft":
        return dft_codebook(geom, cfg.dft_oversampling)
    if kind == "polar":
        return polar_codebook(geom, cfg.polar_rings, cfg.polar_min_distance_ratio * rayleigh_distance(geom))
    if kind == "wavenumber":
        return wavenumber_dictionary(geom, cfg.include_evanescent, cfg.wavenumber_oversampling)
    raise ValueError(f"unknown dictionary kind '{kind}'")


def pilot_noise_sigma(measurement_gain: float, pilot_count: int, snr_db: float) -> float:
    """Noise level giving ||phi h||^2 / (P sigma^2) = SNR"""
    return math.sqrt(measurement_gain / (pilot_count * 10.0 ** (snr_db / 10.0)))


def estimate_channels(
    estimator: ChannelEstimator,
    vectors: np.ndarray,
    snr_db: float,
    max_atoms: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """OMP estimate of every column of `vectors` (N x K) at the given pilot SNR; returns N x K"""
    estimates = np.empty_like(vectors)
    for k in range(vectors.shape[1]):
        h = vectors[:, k]
        gain = float(np.linalg.norm(estimator.measurement.phi @ h) ** 2)
        sigma = pilot_noise_sigma(gain, estimator.measurement.pilot_count, snr_db)
        y = observe(estimator.measurement, h, sigma, rng)
        estimates[:, k] = estimator.recover(y, sigma, max_atoms)
    return estimates


def collect_training_set(cfg: ScenarioConfig, geom: ArrayGeometry) -> np.ndarray:
    """
    cfg.training_samples channel vectors (N x T) from the scenario distribution on the
    training seed; OMP estimates at cfg.training_snr_db when cfg.train_on_estimates.
    """
    seed = cfg.seed + TRAINING_SEED_OFFSET
    dictionary = build_dictionary(cfg.estimation_dictionary, cfg, geom) if cfg.train_on_estimates else None
    columns: List[np.ndarray] = []
    draw = 0
    while len(columns) < cfg.training_samples:
        rng = keyed_rng(seed, draw)
        vectors = draw_channels(cfg, geom, rng).vectors
        if dictionary is not None:
            measurement = build_measurement(geom, cfg.resolved_pilot_count, rng)
            estimator = ChannelEstimator(measurement, dictionary)
            vectors = estimate_channels(estimator, vectors, cfg.training_snr_db, cfg.resolved_max_atoms, rng)
        columns.extend(vectors.T)
        draw += 1
    return np.stack(columns[: cfg.training_samples], axis=1)


def train_learned_codebook(cfg: ScenarioConfig, geom: Optional[ArrayGeometry] = None) -> LearnedCodebook:
    geom = geom or scenario_geometry(cfg)
    training = collect_training_set(cfg, geom)
    logger.info(
        f"Training codebook on {training.shape[1]} {'estimated' if cfg.train_on_estimates else 'genie'} channels",
        LogCategory.CODEBOOK,
    )
    return ksvd_learn(training, cfg.ksvd_config(), workers=cfg.workers)


@dataclass
class ScenarioContext:
    """Per-scenario objects shared read-only by all trials"""
    cfg: ScenarioConfig
    geom: ArrayGeometry
    codebooks: Dict[str, Dictionary] = field(default_factory=dict)
    estimation_dictionaries: Dict[str, Dictionary] = field(default_factory=dict)
    policy: Optional[OfflineCodebookPolicy] = None


def prepare_context(cfg: ScenarioConfig, learned: Optional[LearnedCodebook] = None) -> ScenarioContext:
    geom = scenario_geometry(cfg)
    ctx = ScenarioContext(cfg=cfg, geom=geom)

    for method in cfg.estimation_methods:
        ctx.estimation_dictionaries[method] = build_dictionary(ESTIMATION_DICTIONARIES[method], cfg, geom)
    if cfg.precoding_methods and cfg.estimation and cfg.precoding == "hybrid":
        kind = cfg.estimation_dictionary
        ctx.estimation_dictionaries.setdefault(kind, build_dictionary(kind, cfg, geom))

    for method in cfg.precoding_methods:
        if method in ("dft", "polar"):
            ctx.codebooks[method] = build_dictionary(method, cfg, geom)
    if {"regression", "regression_unprojected"} & set(cfg.precoding_methods):
        learned = learned or train_learned_codebook(cfg, geom)
        ctx.policy = OfflineCodebookPolicy(
            learned,
            decline_fraction=cfg.retrain_decline_fraction,
            project=cfg.project_learned,
        )
        ctx.codebooks["regression"] = ctx.policy.dictionary
        ctx.codebooks["regression_unprojected"] = learned.dictionary
    return ctx


def _precoder_columns(
    method: str,
    ctx: ScenarioContext,
    H: np.ndarray,
    H_hat: Optional[np.ndarray],
    noise_sigma: float,
    rng: np.random.Generator,
) -> np.ndarray:
    cfg = ctx.cfg
    if method == "cm_mf":
        return cm_mf_precoder(H, cfg.power_budget).f
    if method == "fully_digital":
        return fully_digital_zf(H, cfg.power_budget, noise_sigma, regularized=cfg.regularized_digital).f

    codebook = ctx.codebooks[method]
    report_size = min(cfg.report_size, codebook.size)
    sweep_sigma = noise_sigma / math.sqrt(cfg.power_budget)
    reports = [
        beam_sweep_report(
            codebook, H[k].conj(), report_size, sweep_sigma, rng, ue_index=k, max_coherence=cfg.report_max_coherence
        )
        for k in range(H.shape[0])
    ]
    if cfg.precoding == "hybrid":
        return hybrid_precoder(
            codebook,
            reports,
            H_hat,
            cfg.resolved_n_rf,
            cfg.power_budget,
            cfg.analog_selection,
            constant_modulus=method != "regression_unprojected",
            on_rank_loss="fallback",
        ).effective
    if cfg.feedback_type == "type1":
        return type1_precoder(reports, codebook, cfg.power_budget).f
    return type2_precoder(reports, codebook, cfg.power_budget).f


def run_trial(ctx: ScenarioContext, trial: int) -> Dict[Tuple[str, int], float]:
    """
    One Monte Carlo trial over every SNR point.

    Returns:
        {(method, snr_index): metric value}

    Raises:
        TrialFailure: wrapping any simulation error raised inside the trial
    """
    cfg = ctx.cfg
    geom = ctx.geom
    values: Dict[Tuple[str, int], float] = {}
    snr_db = None
    try:
        rng = keyed_rng(cfg.seed, trial)
        channel = draw_channels(cfg, geom, rng)
        H = channel.matrix
        vectors = channel.vectors
        needs_estimates = bool(cfg.precoding_methods) and cfg.estimation and cfg.precoding == "hybrid"
        needs_measurement = cfg.estimation_methods or needs_estimates
        measurement = build_measurement(geom, cfg.resolved_pilot_count, rng) if needs_measurement else None
        estimators = {
            key: ChannelEstimator(measurement, dictionary)
            for key, dictionary in ctx.estimation_dictionaries.items()
        }

        for s, snr_db in enumerate(cfg.snr_grid_db):
            snr_rng = keyed_rng(cfg.seed, trial, s + 1)
            noise_sigma = math.sqrt(cfg.power_budget / 10.0 ** (snr_db / 10.0))

            for method in cfg.estimation_methods:
                estimates = estimate_channels(estimators[method], vectors, snr_db, cfg.resolved_max_atoms, snr_rng)
                values[(method, s)] = float(np.mean([nmse(estimates[:, k], vectors[:, k]) for k in range(channel.num_ues)]))

            if cfg.precoding_methods:
                H_hat = None
                if needs_estimates:
                    estimated = estimate_channels(
                        estimators[cfg.estimation_dictionary], vectors, snr_db, cfg.resolved_max_atoms, snr_rng
                    )
                    H_hat = estimated.conj().T
                elif cfg.precoding == "hybrid":
                    H_hat = H
                for method in cfg.precoding_methods:
                    f = _precoder_columns(method, ctx, H, H_hat, noise_sigma, snr_rng)
                    values[(method, s)] = spectral_efficiency(H, f, noise_sigma).total
    except SimulationError as e:
        if isinstance(e, TrialFailure):
            raise
        raise TrialFailure(trial, e, snr_db) from e
    except np.linalg.LinAlgError as e:
        raise TrialFailure(trial, e, snr_db) from e
    return values


def _aggregate(cfg: ScenarioConfig, per_trial: List[Dict[Tuple[str, int], float]]) -> List[ResultRow]:
    rows = []
    for method in cfg.resolved_methods:
        metric = METRIC_NMSE if method in cfg.estimation_methods else METRIC_SE
        for s, snr_db in enumerate(cfg.snr_grid_db):
            samples = np.array([values[(method, s)] for values in per_trial])
            stderr = float(samples.std(ddof=1) / math.sqrt(samples.size)) if samples.size > 1 else 0.0
            rows.append(ResultRow(
                scenario=cfg.scenario_id,
                method=method,
                snr_db=float(snr_db),
                metric=metric,
                mean=float(samples.mean()),
                stderr=stderr,
                trials=int(samples.size),
            ))
    return rows


def _check_retraining(ctx: ScenarioContext, per_trial: List[Dict[Tuple[str, int], float]]) -> Optional[bool]:
    """Feed the learned codebook's per-trial SE at the top SNR through the retraining policy"""
    policy = ctx.policy
    if policy is None or "regression" not in ctx.cfg.precoding_methods:
        return None
    top = int(np.argmax(ctx.cfg.snr_grid_db))
    series = [values[("regression", top)] for values in per_trial]
    policy.baseline_se = float(np.mean(series[: policy.window]))
    flagged = False
    for se in series:
        flagged = policy.record(se) or flagged
    if flagged:
        logger.warning(
            "Spectral efficiency of the learned codebook fell below the retraining threshold",
            LogCategory.CODEBOOK,
            details=f"baseline={policy.baseline_se:.4f} decline_fraction={policy.decline_fraction}",
        )
    return flagged


def run_scenario(cfg: ScenarioConfig, learned: Optional[LearnedCodebook] = None) -> ResultTable:
    """
    Run cfg.trials Monte Carlo trials and aggregate mean and standard error per
    (method, SNR). Deterministic for a fixed seed, independent of cfg.workers.

    Args:
        cfg: Scenario configuration
        learned: Pre-trained learned codebook; trained from the training split when omitted

    Raises:
        TrialFailure: carrying the index of the first failing trial
    """
    logger.scenario_start(
        cfg.scenario_id,
        details=f"{cfg.rows}x{cfg.cols} UPA, {cfg.near_field_ues}+{cfg.far_field_ues} UEs, {cfg.trials} trials, seed {cfg.seed}",
    )
    ctx = prepare_context(cfg, learned)

    if cfg.workers > 1:
        pool = ThreadPoolExecutor(max_workers=cfg.workers)
        try:
            per_trial = list(pool.map(lambda t: run_trial(ctx, t), range(cfg.trials)))
        except TrialFailure as e:
            logger.trial_error(e.trial_index, str(e.cause))
            pool.shutdown(wait=True, cancel_futures=True)
            raise
        pool.shutdown(wait=True)
    else:
        per_trial = []
        for t in range(cfg.trials):
            try:
                per_trial.append(run_trial(ctx, t))
            except TrialFailure as e:
                logger.trial_error(e.trial_index, str(e.cause))
                raise

    table = ResultTable(
        scenario_id=cfg.scenario_id,
        rows=_aggregate(cfg, per_trial),
        retrain_recommended=_check_retraining(ctx, per_trial),
    )
    logger.scenario_complete(cfg.scenario_id, len(table.rows))
    return table
