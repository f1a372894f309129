import struct

import numpy as np
import pytest

from conftest import crandn
from nearfar_codebook.core.codebook.dictionaries import polar_codebook
from nearfar_codebook.core.codebook.ksvd import ksvd_learn
from nearfar_codebook.core.codebook.storage import (
    HEADER,
    load_matrix,
    load_metadata,
    save_dictionary,
    save_learned_codebook,
    save_matrix,
    sidecar_path,
)
from nearfar_codebook.core.config import KsvdConfig
from nearfar_codebook.core.errors import IoFailure
from nearfar_codebook.core.states import DictionaryKind


def test_header_layout(tmp_path, rng):
    path = save_matrix(crandn(rng, 3, 5), tmp_path / "m.bin", kind=DictionaryKind.WAVENUMBER)
    raw = path.read_bytes()
    assert raw[:4] == b"UFMD"
    assert struct.unpack("<III", raw[4:16]) == (3, 5, 3)
    assert len(raw) == 16 + 3 * 5 * 8


def test_dictionary_survives_at_single_precision(tmp_path, geom4):
    polar = polar_codebook(geom4, distance_rings=1)
    path = save_dictionary(polar, tmp_path / "polar.bin")
    matrix, kind = load_matrix(path)
    assert kind == DictionaryKind.POLAR
    assert matrix.dtype == np.complex128
    np.testing.assert_allclose(matrix, polar.atoms, atol=1e-6)


def test_plain_matrix_has_no_kind(tmp_path, rng):
    _, kind = load_matrix(save_matrix(crandn(rng, 2, 2), tmp_path / "plain.bin"))
    assert kind is None


def test_save_rejects_vectors(tmp_path):
    with pytest.raises(ValueError):
        save_matrix(np.ones(4), tmp_path / "v.bin")


def test_missing_file(tmp_path):
    with pytest.raises(IoFailure):
        load_matrix(tmp_path / "absent.bin")


def test_short_file(tmp_path):
    path = tmp_path / "short.bin"
    path.write_bytes(b"UFMD\x01")
    with pytest.raises(IoFailure):
        load_matrix(path)


def test_bad_magic(tmp_path):
    path = tmp_path / "magic.bin"
    path.write_bytes(HEADER.pack(b"NOPE", 1, 1, 0) + b"\x00" * 8)
    with pytest.raises(IoFailure):
        load_matrix(path)


def test_truncated_payload(tmp_path, rng):
    path = save_matrix(crandn(rng, 4, 4), tmp_path / "trunc.bin")
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(IoFailure):
        load_matrix(path)


def test_unwritable_path(tmp_path, rng):
    with pytest.raises(IoFailure):
        save_matrix(crandn(rng, 2, 2), tmp_path / "no" / "such" / "dir.bin")


def test_learned_codebook_with_sidecar(tmp_path, rng):
    cfg = KsvdConfig(atom_count=6, sparsity=2, max_iters=3, seed=5)
    learned = ksvd_learn(crandn(rng, 8, 40), cfg)
    matrix_path, meta_path = save_learned_codebook(
        learned, cfg, tmp_path / "learned.bin", projected=True, extra={"scenario": "fig4b_hybrid"}
    )
    assert meta_path == sidecar_path(matrix_path)
    assert meta_path.name == "learned.bin.meta"

    matrix, kind = load_matrix(matrix_path)
    assert kind == DictionaryKind.LEARNED
    np.testing.assert_allclose(np.abs(matrix), 1 / np.sqrt(8), atol=1e-6)

    meta = load_metadata(matrix_path)
    assert meta["KIND"] == "learned"
    assert meta["ATOM_COUNT"] == "6"
    assert meta["SPARSITY"] == "2"
    assert meta["SEED"] == "5"
    assert meta["PROJECTED"] == "true"
    assert meta["SCENARIO"] == "fig4b_hybrid"
    assert int(meta["ITERATIONS"]) == len(learned.history)
    assert float(meta["FINAL_NMSE"]) == learned.final_nmse


def test_unprojected_codebook_keeps_atoms(tmp_path, rng):
    cfg = KsvdConfig(atom_count=4, sparsity=1, max_iters=2, seed=0)
    learned = ksvd_learn(crandn(rng, 8, 20), cfg)
    matrix_path, _ = save_learned_codebook(learned, cfg, tmp_path / "raw.bin")
    matrix, _ = load_matrix(matrix_path)
    np.testing.assert_allclose(matrix, learned.dictionary.atoms, atol=1e-6)
    assert load_metadata(matrix_path)["PROJECTED"] == "false"


def test_missing_metadata(tmp_path, rng):
    path = save_matrix(crandn(rng, 2, 2), tmp_path / "bare.bin")
    with pytest.raises(IoFailure):
        load_metadata(path)
