import math

import numpy as np
import pytest

from conftest import crandn, random_unitary
from nearfar_codebook.core.codebook.dictionaries import dft_codebook
from nearfar_codebook.core.errors import (
    DimensionMismatch,
    InsufficientFeedback,
    NonPositiveParameter,
    RankDeficientEffectiveChannel,
    SingularChannel,
)
from nearfar_codebook.core.precoding.precoders import (
    beam_sweep_report,
    cm_mf_precoder,
    fully_digital_zf,
    hybrid_precoder,
    select_analog_codewords,
    spectral_efficiency,
    type1_precoder,
    type2_precoder,
)
from nearfar_codebook.core.states import Dictionary, DictionaryKind, FeedbackReport


def _unitary_codebook(n, rng):
    return Dictionary(atoms=random_unitary(n, rng), kind=DictionaryKind.LEARNED, grid_meta=[{}] * n)


def _report(ue, indices, amplitudes):
    return FeedbackReport(ue_index=ue, codeword_indices=list(indices), amplitudes=np.asarray(amplitudes, dtype=complex))


def _power(f):
    return float(np.linalg.norm(f) ** 2)


#########################
#      BEAM SWEEP       #
#########################

def test_sweep_finds_own_atom(rng):
    codebook = _unitary_codebook(16, rng)
    report = beam_sweep_report(codebook, codebook.atoms[:, 9], 1)
    assert report.codeword_indices == [9]
    assert report.amplitudes[0] == pytest.approx(1.0)
    assert report.strongest == 9


def test_full_sweep_is_ordered(rng):
    codebook = _unitary_codebook(16, rng)
    report = beam_sweep_report(codebook, crandn(rng, 16), 16)
    assert sorted(report.codeword_indices) == list(range(16))
    magnitudes = np.abs(report.amplitudes)
    assert all(a >= b for a, b in zip(magnitudes, magnitudes[1:]))


def test_sweep_matches_brute_force(geom8, rng):
    dft = dft_codebook(geom8, oversampling=2)
    h = crandn(rng, 64)
    report = beam_sweep_report(dft, h, 6)
    brute = sorted(range(dft.size), key=lambda m: -abs(np.vdot(h, dft.atoms[:, m])))[:6]
    assert report.codeword_indices == brute
    np.testing.assert_allclose(report.amplitudes, h.conj() @ dft.atoms[:, brute])


def test_sweep_is_scale_invariant(geom8, rng):
    dft = dft_codebook(geom8)
    h = crandn(rng, 64)
    assert beam_sweep_report(dft, h, 5).codeword_indices == beam_sweep_report(dft, 7.5 * h, 5).codeword_indices


def test_noisy_sweep(geom4, rng):
    dft = dft_codebook(geom4)
    h = 4.0 * dft.atoms[:, 3]
    report = beam_sweep_report(dft, h, 2, noise_sigma=0.1, rng=rng, ue_index=4)
    assert report.ue_index == 4
    assert report.strongest == 3
    with pytest.raises(ValueError):
        beam_sweep_report(dft, h, 2, noise_sigma=0.1)


def test_sweep_argument_checks(geom4, rng):
    dft = dft_codebook(geom4)
    with pytest.raises(NonPositiveParameter):
        beam_sweep_report(dft, crandn(rng, 16), 17)
    with pytest.raises(NonPositiveParameter):
        beam_sweep_report(dft, crandn(rng, 16), 0)
    with pytest.raises(DimensionMismatch):
        beam_sweep_report(dft, crandn(rng, 15), 1)


def _echo_codebook(rng):
    """Columns 0 and 1 point almost the same way, 2 and 3 are orthogonal to both"""
    q = random_unitary(8, rng)
    echo = 1j * (q[:, 0] + 0.1 * q[:, 3]) / math.sqrt(1.01)
    atoms = np.stack([q[:, 0], echo, q[:, 1], q[:, 2]], axis=1)
    return Dictionary(atoms=atoms, kind=DictionaryKind.POLAR, grid_meta=[{}] * 4), q


def test_beam_group_skips_repeated_beams(rng):
    codebook, q = _echo_codebook(rng)
    h = 3 * q[:, 0] + 2 * q[:, 1] + q[:, 2]
    assert beam_sweep_report(codebook, h, 2).codeword_indices == [0, 1]
    assert beam_sweep_report(codebook, h, 2, max_coherence=0.5).codeword_indices == [0, 2]
    report = beam_sweep_report(codebook, h, 4, max_coherence=0.5)
    assert report.codeword_indices == [0, 2, 3, 1]
    np.testing.assert_allclose(np.abs(report.amplitudes), [3, 2, 1, 3 / math.sqrt(1.01)], atol=1e-12)


def test_beam_group_leaves_orthogonal_codebooks_alone(geom8, rng):
    dft = dft_codebook(geom8)
    h = crandn(rng, 64)
    plain = beam_sweep_report(dft, h, 4)
    grouped = beam_sweep_report(dft, h, 4, max_coherence=0.5)
    assert grouped.codeword_indices == plain.codeword_indices


def test_beam_group_threshold_range(rng):
    codebook, q = _echo_codebook(rng)
    with pytest.raises(NonPositiveParameter):
        beam_sweep_report(codebook, q[:, 0], 2, max_coherence=1.5)


#########################
#    TYPE I / TYPE II   #
#########################

def test_type1_disjoint_codewords(rng):
    codebook = _unitary_codebook(8, rng)
    reports = [_report(0, [2, 5], [1.0, 0.5]), _report(1, [6, 1], [0.8, 0.1])]
    pm = type1_precoder(reports, codebook, 2.0)
    expected = codebook.atoms[:, [2, 6]]
    np.testing.assert_allclose(pm.f, expected, atol=1e-12)
    assert _power(pm.f) == pytest.approx(2.0)


def test_type1_collision_demotes_weaker_ue(rng):
    codebook = _unitary_codebook(8, rng)
    reports = [_report(0, [3, 7], [0.4, 0.3]), _report(1, [3, 5], [2.0, 1.0])]
    pm = type1_precoder(reports, codebook, 1.0)
    np.testing.assert_allclose(pm.f[:, 0] * math.sqrt(2), codebook.atoms[:, 7], atol=1e-12)
    np.testing.assert_allclose(pm.f[:, 1] * math.sqrt(2), codebook.atoms[:, 3], atol=1e-12)


def test_type1_exhausted_report(rng):
    codebook = _unitary_codebook(8, rng)
    reports = [_report(0, [3], [2.0]), _report(1, [3], [1.0])]
    with pytest.raises(InsufficientFeedback):
        type1_precoder(reports, codebook, 1.0)
    with pytest.raises(InsufficientFeedback):
        type1_precoder([], codebook, 1.0)


def test_type1_sixteen_ues_meet_budget(geom8, rng):
    dft = dft_codebook(geom8)
    reports = [beam_sweep_report(dft, crandn(rng, 64), 16, ue_index=k) for k in range(16)]
    pm = type1_precoder(reports, dft, 3.0)
    assert pm.f.shape == (64, 16)
    assert _power(pm.f) == pytest.approx(3.0, rel=1e-12)
    np.testing.assert_allclose(np.linalg.norm(pm.f, axis=0), math.sqrt(3.0 / 16))


def test_type2_single_codeword_reduces_to_type1(geom8, rng):
    dft = dft_codebook(geom8)
    channels = [8.0 * dft.atoms[:, m] + 0.2 * crandn(rng, 64) for m in (5, 17, 40)]
    reports = [beam_sweep_report(dft, h, 1, ue_index=k) for k, h in enumerate(channels)]
    t1 = type1_precoder(reports, dft, 1.0).f
    t2 = type2_precoder(reports, dft, 1.0).f
    for k in range(3):
        assert abs(np.vdot(t1[:, k], t2[:, k])) == pytest.approx(1.0 / 3)


def test_type2_projection_identity(rng):
    codebook = _unitary_codebook(16, rng)
    h = 1.5j * codebook.atoms[:, 4] - 0.7 * codebook.atoms[:, 11]
    report = beam_sweep_report(codebook, h, 2)
    f = type2_precoder([report], codebook, 1.0).f[:, 0]
    assert abs(np.vdot(f, h)) == pytest.approx(np.linalg.norm(f) * np.linalg.norm(h))


def test_type2_equal_column_norms(geom8, rng):
    dft = dft_codebook(geom8)
    reports = [beam_sweep_report(dft, crandn(rng, 64), 4, ue_index=k) for k in range(5)]
    f = type2_precoder(reports, dft, 2.5).f
    np.testing.assert_allclose(np.linalg.norm(f, axis=0), math.sqrt(0.5))
    assert _power(f) == pytest.approx(2.5)


def test_type2_zero_amplitudes_fall_back_to_strongest(rng):
    codebook = _unitary_codebook(8, rng)
    f = type2_precoder([_report(0, [6, 2], [0.0, 0.0])], codebook, 1.0).f
    np.testing.assert_allclose(f[:, 0], codebook.atoms[:, 6], atol=1e-12)


def test_single_user_dominance_chain(geom8, rng):
    dft = dft_codebook(geom8)
    sigma = 0.3
    for _ in range(100):
        h = crandn(rng, 64)
        H = h.conj()[None, :]
        report = beam_sweep_report(dft, h, 4)
        se1 = spectral_efficiency(H, type1_precoder([report], dft, 1.0).f, sigma).total
        se2 = spectral_efficiency(H, type2_precoder([report], dft, 1.0).f, sigma).total
        se_fd = spectral_efficiency(H, fully_digital_zf(H, 1.0).f, sigma).total
        assert se_fd >= se2 - 1e-9
        assert se2 >= se1 - 1e-9


#########################
#        HYBRID         #
#########################

def test_global_selection_sums_energy():
    reports = [_report(0, [1, 4], [1.0, 0.9]), _report(1, [4, 2], [0.9, 0.2])]
    assert select_analog_codewords(reports, 6, 2, "global") == [4, 1]
    assert select_analog_codewords(reports, 6, 4, "global") == [4, 1, 2, 0]


def test_per_ue_selection_serves_every_ue():
    reports = [_report(0, [4, 1], [1.0, 0.9]), _report(1, [4, 2], [0.9, 0.2])]
    assert select_analog_codewords(reports, 6, 2, "per_ue") == [4, 2]
    assert select_analog_codewords(reports, 6, 3, "per_ue") == [4, 2, 1]
    with pytest.raises(ValueError):
        select_analog_codewords(reports, 6, 2, "best")


def test_hybrid_single_user(geom8, rng):
    dft = dft_codebook(geom8)
    h = crandn(rng, 64)
    H = h.conj()[None, :]
    report = beam_sweep_report(dft, h, 4)
    hp = hybrid_precoder(dft, [report], H, 1, 2.0)
    assert hp.codeword_indices == [report.strongest]
    f = hp.effective
    assert _power(f) == pytest.approx(2.0)
    sigma = 0.5
    se = spectral_efficiency(H, f, sigma).total
    assert se == pytest.approx(math.log2(1 + abs(H @ f)[0, 0] ** 2 / sigma ** 2))
    beam = dft.atoms[:, report.strongest]
    assert abs(H @ f)[0, 0] ** 2 == pytest.approx(2.0 * abs(np.vdot(h, beam)) ** 2)


@pytest.mark.parametrize("selection", ["global", "per_ue"])
def test_hybrid_nulls_interference(geom8, rng, selection):
    dft = dft_codebook(geom8)
    H = np.stack([8.0 * dft.atoms[:, m].conj() + 0.3 * crandn(rng, 64) for m in (3, 20, 41, 58)])
    reports = [beam_sweep_report(dft, H[k].conj(), 4, ue_index=k) for k in range(4)]
    hp = hybrid_precoder(dft, reports, H, 4, 1.0, selection=selection)
    np.testing.assert_allclose(np.abs(hp.analog), 1 / 8, atol=1e-15)
    assert hp.analog.shape == (64, 4)
    assert hp.baseband.shape == (4, 4)
    gains = np.abs(H @ hp.effective)
    off_diagonal = gains[~np.eye(4, dtype=bool)]
    assert off_diagonal.max() < 1e-8
    assert _power(hp.effective) == pytest.approx(1.0, rel=1e-9)
    np.testing.assert_allclose(np.linalg.norm(hp.effective, axis=0), 0.5)


def test_hybrid_extra_rf_chains(geom8, rng):
    dft = dft_codebook(geom8)
    H = crandn(rng, 3, 64)
    reports = [beam_sweep_report(dft, H[k].conj(), 4, ue_index=k) for k in range(3)]
    hp = hybrid_precoder(dft, reports, H, 6, 1.0)
    assert hp.analog.shape == (64, 6)
    assert len(set(hp.codeword_indices)) == 6
    assert _power(hp.effective) == pytest.approx(1.0)


def test_hybrid_rank_deficiency(geom8, rng):
    dft = dft_codebook(geom8)
    h = crandn(rng, 64)
    H = np.stack([h.conj(), h.conj()])
    reports = [beam_sweep_report(dft, h, 4, ue_index=k) for k in range(2)]
    with pytest.raises(RankDeficientEffectiveChannel):
        hybrid_precoder(dft, reports, H, 2, 1.0)


def test_hybrid_fallback_reselects_per_ue(geom8):
    dft = dft_codebook(geom8)
    a = dft.atoms
    # both UEs weigh codewords 3 and 20 in the same ratio, so the global pick [3, 20] is singular
    h0 = 8 * a[:, 3] + 2 * a[:, 20]
    h1 = 4 * a[:, 3] + 1 * a[:, 20] + 2 * a[:, 41]
    H = np.stack([h0.conj(), h1.conj()])
    reports = [beam_sweep_report(dft, h, 3, ue_index=k) for k, h in enumerate((h0, h1))]
    assert select_analog_codewords(reports, 64, 2, "global") == [3, 20]
    with pytest.raises(RankDeficientEffectiveChannel):
        hybrid_precoder(dft, reports, H, 2, 1.0)

    hp = hybrid_precoder(dft, reports, H, 2, 1.0, on_rank_loss="fallback")
    assert hp.codeword_indices == [3, 41]
    gains = np.abs(H @ hp.effective)
    assert max(gains[0, 1], gains[1, 0]) < 1e-8
    assert _power(hp.effective) == pytest.approx(1.0)


def test_hybrid_fallback_to_matched_filter(geom8, rng):
    dft = dft_codebook(geom8)
    h = crandn(rng, 64)
    H = np.stack([h.conj(), h.conj()])
    reports = [beam_sweep_report(dft, h, 4, ue_index=k) for k in range(2)]
    hp = hybrid_precoder(dft, reports, H, 2, 1.0, on_rank_loss="fallback")
    assert np.all(np.isfinite(hp.effective))
    assert _power(hp.effective) == pytest.approx(1.0)
    # matched filtering on identical rows sends both streams the same way
    np.testing.assert_allclose(hp.effective[:, 0], hp.effective[:, 1], atol=1e-12)


def test_hybrid_fallback_with_a_silent_estimate(geom8, rng):
    dft = dft_codebook(geom8)
    H = crandn(rng, 3, 64)
    reports = [beam_sweep_report(dft, H[k].conj(), 4, ue_index=k) for k in range(3)]
    estimates = H.copy()
    estimates[1] = 0.0
    hp = hybrid_precoder(dft, reports, estimates, 3, 1.0, on_rank_loss="fallback")
    f = hp.effective
    assert np.all(np.isfinite(f))
    np.testing.assert_allclose(f[:, 1], 0.0, atol=1e-15)
    assert _power(f) == pytest.approx(2.0 / 3.0)
    assert spectral_efficiency(H, f, 0.1).per_ue[1] == pytest.approx(0.0, abs=1e-12)


def test_hybrid_unknown_rank_loss_policy(geom8, rng):
    dft = dft_codebook(geom8)
    H = crandn(rng, 2, 64)
    reports = [beam_sweep_report(dft, H[k].conj(), 2, ue_index=k) for k in range(2)]
    with pytest.raises(ValueError):
        hybrid_precoder(dft, reports, H, 2, 1.0, on_rank_loss="ignore")


def test_hybrid_without_constant_modulus_keeps_raw_codewords(rng):
    codebook = _unitary_codebook(16, rng)
    H = crandn(rng, 2, 16)
    reports = [beam_sweep_report(codebook, H[k].conj(), 3, ue_index=k) for k in range(2)]
    raw = hybrid_precoder(codebook, reports, H, 2, 1.0, constant_modulus=False)
    projected = hybrid_precoder(codebook, reports, H, 2, 1.0)
    assert raw.codeword_indices == projected.codeword_indices
    np.testing.assert_allclose(raw.analog, codebook.atoms[:, raw.codeword_indices], atol=1e-12)
    assert np.ptp(np.abs(raw.analog)) > 1e-3
    np.testing.assert_allclose(np.abs(projected.analog), 0.25, atol=1e-15)
    assert np.abs(raw.effective - projected.effective).max() > 1e-3
    assert _power(raw.effective) == pytest.approx(1.0)


def test_hybrid_argument_checks(geom8, rng):
    dft = dft_codebook(geom8)
    H = crandn(rng, 2, 64)
    reports = [beam_sweep_report(dft, H[k].conj(), 2, ue_index=k) for k in range(2)]
    with pytest.raises(NonPositiveParameter):
        hybrid_precoder(dft, reports, H, 1, 1.0)
    with pytest.raises(NonPositiveParameter):
        hybrid_precoder(dft, reports, H, 65, 1.0)
    with pytest.raises(DimensionMismatch):
        hybrid_precoder(dft, reports[:1], H, 2, 1.0)
    with pytest.raises(DimensionMismatch):
        hybrid_precoder(dft, reports, H[:, :32], 2, 1.0)
    with pytest.raises(NonPositiveParameter):
        hybrid_precoder(dft, reports, H, 2, 0.0)


#########################
#       BASELINES       #
#########################

def test_zf_on_orthogonal_rows_is_matched_filter(rng):
    q = random_unitary(16, rng)
    H = np.diag([1.0, 2.0, 0.5]) @ q[:3]
    f = fully_digital_zf(H, 1.0).f
    for k in range(3):
        mf = H[k].conj()
        assert abs(np.vdot(mf, f[:, k])) == pytest.approx(np.linalg.norm(mf) * np.linalg.norm(f[:, k]))


def test_zf_diagonalizes(rng):
    H = crandn(rng, 4, 16)
    f = fully_digital_zf(H, 2.0).f
    product = H @ f
    np.testing.assert_allclose(product - np.diag(np.diag(product)), 0.0, atol=1e-10)
    assert _power(f) == pytest.approx(2.0)


def test_zf_single_user_capacity(rng):
    h = crandn(rng, 16)
    H = h.conj()[None, :]
    p, sigma = 2.0, 0.4
    se = spectral_efficiency(H, fully_digital_zf(H, p).f, sigma).total
    assert se == pytest.approx(math.log2(1 + np.linalg.norm(h) ** 2 * p / sigma ** 2))


def test_zf_singular_channels(rng):
    with pytest.raises(SingularChannel):
        fully_digital_zf(crandn(rng, 5, 4), 1.0)
    h = crandn(rng, 8)
    with pytest.raises(SingularChannel):
        fully_digital_zf(np.stack([h, 2 * h]), 1.0)


def test_regularized_zf(rng):
    h = crandn(rng, 8)
    H = np.stack([h, 2 * h])
    f = fully_digital_zf(H, 1.0, noise_sigma=0.5, regularized=True).f
    assert _power(f) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        fully_digital_zf(H, 1.0, regularized=True)


def test_regularized_zf_approaches_zf_at_high_snr(rng):
    H = crandn(rng, 3, 16)
    zf = fully_digital_zf(H, 1.0).f
    mmse = fully_digital_zf(H, 1.0, noise_sigma=1e-6, regularized=True).f
    np.testing.assert_allclose(mmse, zf, atol=1e-6)


def test_cm_mf_on_constant_modulus_channel(rng):
    h = np.exp(1j * rng.uniform(0, 2 * np.pi, 16)) * 3.0
    f = cm_mf_precoder(h.conj()[None, :], 1.0).f
    assert abs(np.vdot(h, f[:, 0])) == pytest.approx(np.linalg.norm(h))


def test_cm_mf_modulus_and_loss(rng):
    H = crandn(rng, 3, 16)
    pm = cm_mf_precoder(H, 3.0)
    np.testing.assert_allclose(np.abs(pm.f), 1 / 4, atol=1e-15)
    h = crandn(rng, 16)
    single = h.conj()[None, :]
    se_cm = spectral_efficiency(single, cm_mf_precoder(single, 1.0).f, 0.5).total
    se_fd = spectral_efficiency(single, fully_digital_zf(single, 1.0).f, 0.5).total
    assert 0.0 < se_fd - se_cm


#########################
#  SPECTRAL EFFICIENCY  #
#########################

def test_se_two_user_hand_example():
    H = np.eye(2, dtype=complex)
    f = np.array([[1.0, 0.5], [0.5, 1.0]], dtype=complex)
    se = spectral_efficiency(H, f, 1.0)
    np.testing.assert_allclose(se.per_ue, [math.log2(1.8)] * 2)
    assert se.total == pytest.approx(2 * math.log2(1.8))


def test_se_zero_precoder(rng):
    se = spectral_efficiency(crandn(rng, 3, 8), np.zeros((8, 3)), 1.0)
    assert se.total == 0.0


def test_se_argument_checks(rng):
    with pytest.raises(DimensionMismatch):
        spectral_efficiency(crandn(rng, 2, 8), np.zeros((8, 3)), 1.0)
    with pytest.raises(NonPositiveParameter):
        spectral_efficiency(crandn(rng, 2, 8), np.zeros((8, 2)), 0.0)
