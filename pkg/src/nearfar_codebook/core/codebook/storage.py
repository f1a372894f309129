"""
Binary matrix files for codebooks.

Layout: 16-byte header (magic b"UFMD", little-endian u32 N, u32 M, u32 kind code)
followed by the N x M matrix as row-major little-endian complex64.
A learned codebook also gets a KEY=value sidecar file next to it (<path>.meta).
"""

import struct
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
from dotenv import dotenv_values

from ...loader.template_loader import template_loader
from ...utils.logger import logger
from ..config import KsvdConfig
from ..errors import IoFailure
from ..states import Dictionary, DictionaryKind, LearnedCodebook
from .ksvd import constant_modulus_project

MAGIC = b"UFMD"
HEADER = struct.Struct("<4sIII")

KIND_CODES = {
    None: 0,
    DictionaryKind.DFT: 1,
    DictionaryKind.POLAR: 2,
    DictionaryKind.WAVENUMBER: 3,
    DictionaryKind.LEARNED: 4,
}
KINDS_BY_CODE = {code: kind for kind, code in KIND_CODES.items()}

PathLike = Union[str, Path]


def save_matrix(matrix: np.ndarray, path: PathLike, kind: Optional[DictionaryKind] = None) -> Path:
    """Write an N x M complex matrix in the binary codebook format"""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {matrix.shape}")
    path = Path(path)
    rows, cols = matrix.shape
    try:
        with open(path, "wb") as fh:
            fh.write(HEADER.pack(MAGIC, rows, cols, KIND_CODES[kind]))
            fh.write(np.ascontiguousarray(matrix, dtype="<c8").tobytes(order="C"))
    except OSError as e:
        raise IoFailure(f"cannot write matrix to {path}: {e}") from e
    logger.file_written(str(path), details=f"{rows} x {cols} complex64")
    return path


def load_matrix(path: PathLike) -> Tuple[np.ndarray, Optional[DictionaryKind]]:
    """Read a matrix written by save_matrix; returns (complex128 matrix, kind or None)"""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise IoFailure(f"cannot read matrix from {path}: {e}") from e

    if len(raw) < HEADER.size:
        raise IoFailure(f"{path} is too short for a codebook header")
    magic, rows, cols, code = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise IoFailure(f"{path} has magic {magic!r}, expected {MAGIC!r}")
    expected = HEADER.size + rows * cols * 8
    if len(raw) != expected:
        raise IoFailure(f"{path} holds {len(raw)} bytes, expected {expected} for {rows} x {cols}")

    matrix = np.frombuffer(raw, dtype="<c8", offset=HEADER.size).reshape(rows, cols)
    return matrix.astype(complex), KINDS_BY_CODE.get(code)


def save_dictionary(dictionary: Dictionary, path: PathLike) -> Path:
    return save_matrix(dictionary.atoms, path, kind=dictionary.kind)


def sidecar_path(path: PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta")


def save_learned_codebook(
    codebook: LearnedCodebook,
    cfg: KsvdConfig,
    path: PathLike,
    projected: bool = False,
    extra: Optional[Dict[str, Any]] = None,
) -> Tuple[Path, Path]:
    """
    Write the learned atoms (constant-modulus projected when `projected` is set by the
    caller) and the sidecar metadata file.

    Returns:
        (matrix path, sidecar path)
    """
    atoms = constant_modulus_project(codebook.dictionary.atoms) if projected else codebook.dictionary.atoms
    matrix_path = save_matrix(atoms, path, kind=DictionaryKind.LEARNED)

    text = template_loader.render_template(
        "codebook_meta",
        kind=DictionaryKind.LEARNED.value,
        num_elements=codebook.dictionary.num_elements,
        atom_count=cfg.atom_count,
        sparsity=cfg.sparsity,
        max_iters=cfg.max_iters,
        nmse_threshold=repr(cfg.nmse_threshold),
        seed=cfg.seed,
        iterations=len(codebook.history),
        final_nmse=repr(codebook.final_nmse),
        projected=str(projected).lower(),
        extra=extra or {},
    )
    meta_path = sidecar_path(path)
    try:
        meta_path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise IoFailure(f"cannot write metadata to {meta_path}: {e}") from e
    logger.file_written(str(meta_path))
    return matrix_path, meta_path


def load_metadata(path: PathLike) -> Dict[str, Optional[str]]:
    """Sidecar metadata of a saved codebook as a dict"""
    meta_path = sidecar_path(path)
    if not meta_path.exists():
        raise IoFailure(f"no metadata file at {meta_path}")
    return dict(dotenv_values(meta_path))
