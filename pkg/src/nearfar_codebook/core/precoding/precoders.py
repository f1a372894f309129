"""
Beam-sweeping feedback, Type-I/Type-II codebook precoders, hybrid analog/digital
precoding, fully digital ZF and CM-MF baselines, and spectral efficiency.

Channel matrices are K x N with row k equal to h_k^H, so (H @ f)[k] = h_k^H f.
Every precoder splits the power budget equally over the K streams.
"""

import math
from typing import List, Literal, Optional, Sequence

import numpy as np

from ...utils.logger import LogCategory, logger
from ..codebook.ksvd import constant_modulus_project
from ..errors import (
    DimensionMismatch,
    InsufficientFeedback,
    NonPositiveParameter,
    RankDeficientEffectiveChannel,
    SingularChannel,
)
from ..states import Dictionary, FeedbackReport, HybridPrecoder, PrecodingMatrix, SpectralEfficiency

# Smallest-to-largest singular value ratio below which a channel counts as rank deficient
RANK_TOL = 1e-10


def _equal_power(columns: np.ndarray, power_budget: float) -> np.ndarray:
    """Scale every nonzero column to norm sqrt(power_budget / K)"""
    norms = np.linalg.norm(columns, axis=0)
    per_stream = math.sqrt(power_budget / columns.shape[1])
    scale = np.divide(per_stream, norms, out=np.zeros_like(norms), where=norms > 0)
    return columns * scale


def _check_budget(power_budget: float):
    if power_budget <= 0:
        raise NonPositiveParameter(f"power_budget must be positive, got {power_budget}")


def _full_rank(matrix: np.ndarray) -> bool:
    s = np.linalg.svd(matrix, compute_uv=False)
    return bool(s.size and s[0] > 0 and s[-1] / s[0] > RANK_TOL)


#########################
#      BEAM SWEEP       #
#########################

def _diverse_top(codebook: Dictionary, order: np.ndarray, L: int, max_coherence: float) -> List[int]:
    """Walk `order` and keep codewords whose |<a_m, a_r>| <= max_coherence for every kept a_r"""
    atoms = codebook.atoms
    kept: List[int] = []
    for m in order:
        if len(kept) == L:
            break
        if kept and np.max(np.abs(atoms[:, kept].conj().T @ atoms[:, m])) > max_coherence:
            continue
        kept.append(int(m))
    # too few mutually incoherent codewords: fill with the strongest of the rest
    for m in order:
        if len(kept) == L:
            break
        if int(m) not in kept:
            kept.append(int(m))
    return kept


def beam_sweep_report(
    codebook: Dictionary,
    h_k: np.ndarray,
    L: int,
    noise_sigma: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    ue_index: int = 0,
    max_coherence: Optional[float] = None,
) -> FeedbackReport:
    """
    Received pilot amplitude h_k^H a_m (plus noise) for every codeword; report the
    L strongest by magnitude, ties to the lowest index.

    With `max_coherence` the report is a beam group: a codeword is skipped while it
    overlaps an already reported one by more than max_coherence.
    """
    h_k = np.asarray(h_k)
    if h_k.shape != (codebook.num_elements,):
        raise DimensionMismatch(f"channel of shape {h_k.shape} does not match a codebook with N = {codebook.num_elements}")
    if not 1 <= L <= codebook.size:
        raise NonPositiveParameter(f"report size must be in [1, {codebook.size}], got {L}")
    if max_coherence is not None and not 0.0 <= max_coherence <= 1.0:
        raise NonPositiveParameter(f"max_coherence must be in [0, 1], got {max_coherence}")

    amplitudes = h_k.conj() @ codebook.atoms
    if noise_sigma > 0:
        if rng is None:
            raise ValueError("noisy beam sweep needs an rng")
        noise = rng.standard_normal(amplitudes.shape) + 1j * rng.standard_normal(amplitudes.shape)
        amplitudes = amplitudes + noise_sigma * noise / math.sqrt(2.0)

    order = np.argsort(-np.abs(amplitudes), kind="stable")
    top = order[:L] if max_coherence is None else np.array(_diverse_top(codebook, order, L, max_coherence))
    return FeedbackReport(
        ue_index=ue_index,
        codeword_indices=[int(i) for i in top],
        amplitudes=amplitudes[top],
    )


def type1_precoder(reports: Sequence[FeedbackReport], codebook: Dictionary, power_budget: float) -> PrecodingMatrix:
    """
    Column k is the strongest codeword reported by UE k (report order).

    When two UEs claim the same codeword the UE with the weaker strongest amplitude
    moves to its next reported index.

    Raises:
        InsufficientFeedback: if collisions exhaust a UE's report
    """
    _check_budget(power_budget)
    if not reports:
        raise InsufficientFeedback("no feedback reports")

    priority = sorted(range(len(reports)), key=lambda k: -float(np.max(np.abs(reports[k].amplitudes), initial=0.0)))
    claimed = set()
    chosen = [0] * len(reports)
    for k in priority:
        free = [m for m in reports[k].codeword_indices if m not in claimed]
        if not free:
            raise InsufficientFeedback(
                f"UE {reports[k].ue_index}: all {len(reports[k].codeword_indices)} reported codewords are taken"
            )
        chosen[k] = free[0]
        claimed.add(free[0])

    f = _equal_power(codebook.atoms[:, chosen].copy(), power_budget)
    return PrecodingMatrix(f=f, power_budget=power_budget)


def type2_precoder(reports: Sequence[FeedbackReport], codebook: Dictionary, power_budget: float) -> PrecodingMatrix:
    """
    Column k is the matched combination sum_l conj(amplitude_l) a_{m_l} over UE k's
    report, i.e. the projection of h_k onto the reported codewords.
    """
    _check_budget(power_budget)
    if not reports:
        raise InsufficientFeedback("no feedback reports")

    columns = np.empty((codebook.num_elements, len(reports)), dtype=complex)
    for k, report in enumerate(reports):
        if not report.codeword_indices:
            raise InsufficientFeedback(f"UE {report.ue_index} sent an empty report")
        column = codebook.atoms[:, report.codeword_indices] @ np.conj(report.amplitudes)
        if np.linalg.norm(column) == 0.0:
            column = codebook.atoms[:, report.strongest]
        columns[:, k] = column

    return PrecodingMatrix(f=_equal_power(columns, power_budget), power_budget=power_budget)


#########################
#        HYBRID         #
#########################

def _reported_energy(reports: Sequence[FeedbackReport], size: int) -> np.ndarray:
    energy = np.zeros(size)
    for report in reports:
        np.add.at(energy, report.codeword_indices, np.abs(report.amplitudes) ** 2)
    return energy


def select_analog_codewords(
    reports: Sequence[FeedbackReport],
    codebook_size: int,
    n_rf: int,
    mode: Literal["global", "per_ue"] = "global",
) -> List[int]:
    """
    Codeword indices for the RF chains.

    global: the n_rf codewords with the largest reported energy summed over UEs.
    per_ue: each UE first gets its strongest codeword not yet taken, remaining
    chains are filled by global energy. Ties go to the lowest index in both modes.
    """
    energy = _reported_energy(reports, codebook_size)
    by_energy = [int(m) for m in np.argsort(-energy, kind="stable")]
    if mode == "global":
        return by_energy[:n_rf]
    if mode != "per_ue":
        raise ValueError(f"unknown analog selection mode '{mode}'")

    selected: List[int] = []
    for report in reports:
        pick = next((m for m in report.codeword_indices if m not in selected), None)
        if pick is None:
            pick = next(m for m in by_energy if m not in selected)
        selected.append(pick)
    for m in by_energy:
        if len(selected) >= n_rf:
            break
        if m not in selected:
            selected.append(m)
    return selected[:n_rf]


def _zf_baseband(analog: np.ndarray, effective_channel: np.ndarray, power_budget: float) -> np.ndarray:
    baseband = np.linalg.pinv(effective_channel)
    return _stream_power(analog, baseband, power_budget)


def _mrt_baseband(analog: np.ndarray, effective_channel: np.ndarray, power_budget: float) -> np.ndarray:
    return _stream_power(analog, effective_channel.conj().T, power_budget)


def _stream_power(analog: np.ndarray, baseband: np.ndarray, power_budget: float) -> np.ndarray:
    # equal per-UE power measured after the analog stage; silent streams stay zero
    stream_norms = np.linalg.norm(analog @ baseband, axis=0)
    per_stream = math.sqrt(power_budget / baseband.shape[1])
    scale = np.divide(per_stream, stream_norms, out=np.zeros_like(stream_norms), where=stream_norms > 0)
    return baseband * scale


def hybrid_precoder(
    codebook: Dictionary,
    reports: Sequence[FeedbackReport],
    channel_estimates: np.ndarray,
    n_rf: int,
    power_budget: float,
    selection: Literal["global", "per_ue"] = "global",
    constant_modulus: bool = True,
    on_rank_loss: Literal["raise", "fallback"] = "raise",
) -> HybridPrecoder:
    """
    Analog stage from the selected codewords, ZF baseband on the effective
    channel H_eff = H_hat @ analog.

    The analog columns are projected to constant modulus unless `constant_modulus`
    is off, which keeps the raw codewords as an unconstrained reference.

    When H_eff loses rank, `on_rank_loss="raise"` raises. With "fallback" a global
    selection is retried per UE (no shared codewords), and if H_eff is still rank
    deficient the baseband becomes matched filtering H_eff^H instead of ZF.

    Args:
        codebook: Codebook the reports refer to
        reports: One report per UE
        channel_estimates: K x N channel estimate, row k = h_k^H
        n_rf: Number of RF chains, K <= n_rf <= M
        power_budget: Total transmit power
        selection: Analog codeword selection mode
        constant_modulus: Project the analog columns to constant modulus
        on_rank_loss: "raise" or "fallback"

    Raises:
        RankDeficientEffectiveChannel: if H_eff has rank below K and on_rank_loss is "raise"
    """
    _check_budget(power_budget)
    H = np.asarray(channel_estimates)
    if H.ndim != 2 or H.shape[1] != codebook.num_elements:
        raise DimensionMismatch(f"channel estimates of shape {H.shape} do not match N = {codebook.num_elements}")
    num_ues = H.shape[0]
    if not num_ues <= n_rf <= codebook.size:
        raise NonPositiveParameter(f"n_rf must satisfy K = {num_ues} <= n_rf <= M = {codebook.size}, got {n_rf}")
    if len(reports) != num_ues:
        raise DimensionMismatch(f"{len(reports)} reports for {num_ues} UEs")
    if on_rank_loss not in ("raise", "fallback"):
        raise ValueError(f"unknown rank-loss policy '{on_rank_loss}'")

    def analog_stage(mode: str):
        chosen = select_analog_codewords(reports, codebook.size, n_rf, mode)
        columns = codebook.atoms[:, chosen]
        if constant_modulus:
            columns = constant_modulus_project(columns)
        else:
            norms = np.linalg.norm(columns, axis=0)
            columns = columns / np.where(norms > 0, norms, 1.0)
        return chosen, columns

    indices, analog = analog_stage(selection)
    effective_channel = H @ analog
    if _full_rank(effective_channel):
        baseband = _zf_baseband(analog, effective_channel, power_budget)
        return HybridPrecoder(analog=analog, baseband=baseband, power_budget=power_budget, codeword_indices=indices)

    if on_rank_loss == "raise":
        raise RankDeficientEffectiveChannel(
            f"effective channel {effective_channel.shape} lost rank with codewords {indices}"
        )

    if selection != "per_ue":
        indices, analog = analog_stage("per_ue")
        effective_channel = H @ analog
        if _full_rank(effective_channel):
            logger.debug(
                f"Effective channel lost rank with global selection, using per-UE codewords {indices}",
                LogCategory.PRECODING,
            )
            baseband = _zf_baseband(analog, effective_channel, power_budget)
            return HybridPrecoder(analog=analog, baseband=baseband, power_budget=power_budget, codeword_indices=indices)

    logger.warning(
        f"Effective channel {effective_channel.shape} lost rank with codewords {indices}, using matched filtering",
        LogCategory.PRECODING,
    )
    baseband = _mrt_baseband(analog, effective_channel, power_budget)
    return HybridPrecoder(analog=analog, baseband=baseband, power_budget=power_budget, codeword_indices=indices)


#########################
#       BASELINES       #
#########################

def fully_digital_zf(
    H: np.ndarray,
    power_budget: float,
    noise_sigma: Optional[float] = None,
    regularized: bool = False,
) -> PrecodingMatrix:
    """
    f = H^H (H H^H)^-1 with equal-power columns. With `regularized` the inverse
    becomes (H H^H + alpha I)^-1, alpha = K noise_sigma^2 / power_budget (MMSE).

    Raises:
        SingularChannel: if H is not full row rank
    """
    _check_budget(power_budget)
    H = np.asarray(H)
    if H.ndim != 2:
        raise DimensionMismatch(f"expected a K x N channel matrix, got shape {H.shape}")
    num_ues, num_elements = H.shape
    if num_ues > num_elements:
        raise SingularChannel(f"{num_ues} UEs exceed the {num_elements} antennas")

    gram = H @ H.conj().T
    if regularized:
        if noise_sigma is None:
            raise ValueError("regularized precoding needs noise_sigma")
        if not np.any(H):
            raise SingularChannel("channel matrix is zero")
        gram = gram + (num_ues * noise_sigma ** 2 / power_budget) * np.eye(num_ues)
    elif not _full_rank(H):
        raise SingularChannel(f"channel matrix {H.shape} is not full row rank")

    f = H.conj().T @ np.linalg.solve(gram, np.eye(num_ues))
    return PrecodingMatrix(f=_equal_power(f, power_budget), power_budget=power_budget)


def cm_mf_precoder(H: np.ndarray, power_budget: float) -> PrecodingMatrix:
    """Column k = constant-modulus projection of h_k, equal power"""
    _check_budget(power_budget)
    H = np.asarray(H)
    columns = constant_modulus_project(H.conj().T)
    return PrecodingMatrix(f=_equal_power(columns, power_budget), power_budget=power_budget)


#########################
#       METRICS         #
#########################

def spectral_efficiency(H: np.ndarray, f: np.ndarray, noise_sigma: float) -> SpectralEfficiency:
    """
    Treat-interference-as-noise sum rate:
    SINR_k = |h_k^H f_k|^2 / (sum_{j != k} |h_k^H f_j|^2 + noise_sigma^2).
    """
    H = np.asarray(H)
    f = np.asarray(f)
    if H.ndim != 2 or f.ndim != 2 or H.shape[1] != f.shape[0] or H.shape[0] != f.shape[1]:
        raise DimensionMismatch(f"channel {H.shape} and precoder {f.shape} do not agree")
    if noise_sigma <= 0:
        raise NonPositiveParameter(f"noise_sigma must be positive, got {noise_sigma}")

    gains = np.abs(H @ f) ** 2
    signal = np.diag(gains)
    interference = np.maximum(gains.sum(axis=1) - signal, 0.0)
    sinr = signal / (interference + noise_sigma ** 2)
    per_ue = np.log2(1.0 + sinr)
    return SpectralEfficiency(per_ue=per_ue, total=float(per_ue.sum()))
