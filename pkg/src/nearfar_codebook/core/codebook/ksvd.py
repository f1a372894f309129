"""
K-SVD codebook learning, constant-modulus projection and the offline retraining policy.

The learned ("regression") codebook is fitted once on a training set of channel
vectors, H ~ A X with column-sparse X, and then frozen until the observed spectral
efficiency drops far enough below its baseline.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ...utils.logger import LogCategory, logger
from ..config import KsvdConfig, StoppingRule
from ..errors import DimensionMismatch, EmptyTrainingSet, NoProgress, NonPositiveParameter
from ..estimation.omp import omp
from ..states import Dictionary, DictionaryKind, LearnedCodebook

# Moduli at or below this are treated as zero by the constant-modulus projection
CM_EPS = 1e-12

# Atoms more coherent than this with an earlier atom are swapped for a training sample
DUPLICATE_COHERENCE = 0.99

RETRAIN_WINDOW = 10


def _as_training_matrix(H: np.ndarray) -> np.ndarray:
    H = np.asarray(H, dtype=complex)
    if H.ndim == 1:
        H = H[:, None]
    if H.ndim != 2 or H.shape[0] == 0 or H.shape[1] == 0:
        raise EmptyTrainingSet(f"training set must be a nonempty N x T matrix, got shape {H.shape}")
    return H


def sparse_coding_step(A: np.ndarray, H: np.ndarray, sparsity: int, workers: int = 1) -> np.ndarray:
    """
    Column-wise OMP of H over A with `sparsity` atoms and no residual tolerance.

    A column with no correlated atom (orthogonal to every atom) gets a zero code.

    Returns:
        Sparse codes, shape (M, T)
    """
    A = np.asarray(A)
    H = _as_training_matrix(H)
    if A.shape[0] != H.shape[0]:
        raise DimensionMismatch(f"dictionary has {A.shape[0]} rows, training set has {H.shape[0]}")

    stopping = StoppingRule(max_atoms=sparsity, residual_tol=0.0)

    def code_column(t: int) -> Tuple[List[int], np.ndarray]:
        try:
            est = omp(H[:, t], A, stopping)
        except NoProgress:
            return [], np.zeros(0, dtype=complex)
        return est.support, est.coefficients

    columns = range(H.shape[1])
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(code_column, columns))
    else:
        results = [code_column(t) for t in columns]

    codes = np.zeros((A.shape[1], H.shape[1]), dtype=complex)
    for t, (support, coefficients) in enumerate(results):
        if support:
            codes[support, t] = coefficients
    return codes


def _take_worst_sample(H: np.ndarray, residual_energy: np.ndarray) -> np.ndarray:
    """Normalized training column with the largest residual; its residual is then zeroed so it is taken once"""
    t = int(np.argmax(residual_energy))
    residual_energy[t] = -1.0
    column = H[:, t]
    norm = np.linalg.norm(column)
    if norm == 0.0:
        column = np.ones(H.shape[0], dtype=complex)
        norm = math.sqrt(H.shape[0])
    return column / norm


def dictionary_update_step(A: np.ndarray, sparse_codes: np.ndarray, H: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    One K-SVD dictionary pass with the supports held fixed.

    Every used atom j becomes the leading left singular vector of the residual
    restricted to the columns that use it, and its code row the leading singular
    value times the leading right singular vector. Atoms no column uses are replaced
    by the worst-represented training columns.

    Returns:
        (updated A, updated sparse codes)
    """
    H = _as_training_matrix(H)
    A = np.array(A, dtype=complex, copy=True)
    codes = np.array(sparse_codes, dtype=complex, copy=True)
    if A.shape[0] != H.shape[0] or codes.shape != (A.shape[1], H.shape[1]):
        raise DimensionMismatch(
            f"shapes do not agree: A {A.shape}, codes {codes.shape}, H {H.shape}"
        )

    residual = H - A @ codes
    unused = []
    for j in range(A.shape[1]):
        omega = np.flatnonzero(codes[j])
        if omega.size == 0:
            unused.append(j)
            continue
        restricted = residual[:, omega] + np.outer(A[:, j], codes[j, omega])
        u, s, vh = np.linalg.svd(restricted, full_matrices=False)
        A[:, j] = u[:, 0]
        codes[j, omega] = s[0] * vh[0]
        residual[:, omega] = restricted - np.outer(A[:, j], codes[j, omega])

    if unused:
        residual_energy = np.sum(np.abs(residual) ** 2, axis=0)
        for j in unused:
            A[:, j] = _take_worst_sample(H, residual_energy)

    return A, codes


def _clear_dictionary(A: np.ndarray, codes: np.ndarray, H: np.ndarray) -> int:
    """Replace atoms nearly parallel to an earlier atom, in place; returns how many were replaced"""
    gram = np.abs(A.conj().T @ A)
    residual_energy = np.sum(np.abs(H - A @ codes) ** 2, axis=0)
    replaced = 0
    for j in range(1, A.shape[1]):
        if gram[j, :j].max() > DUPLICATE_COHERENCE:
            A[:, j] = _take_worst_sample(H, residual_energy)
            gram[j, :] = np.abs(A[:, j].conj() @ A)
            gram[:, j] = gram[j, :]
            replaced += 1
    return replaced


def _initial_atoms(H: np.ndarray, atom_count: int, rng: np.random.Generator) -> np.ndarray:
    n, t = H.shape
    if t >= atom_count:
        chosen = rng.choice(t, size=atom_count, replace=False)
        A = H[:, chosen]
    else:
        logger.warning(
            f"Training set has {t} samples for {atom_count} atoms; filling with random atoms",
            LogCategory.CODEBOOK,
        )
        extra = rng.standard_normal((n, atom_count - t)) + 1j * rng.standard_normal((n, atom_count - t))
        A = np.hstack([H[:, rng.permutation(t)], extra])
    return A / np.linalg.norm(A, axis=0)


def ksvd_learn(H: np.ndarray, cfg: KsvdConfig, workers: int = 1) -> LearnedCodebook:
    """
    Learn an atom_count-column codebook from training channels (columns of H).

    Alternates sparse coding and dictionary updates until the training NMSE
    ||H - A X||_F^2 / ||H||_F^2 is at most cfg.nmse_threshold or cfg.max_iters
    iterations have run. Deterministic for a fixed cfg.seed.

    Raises:
        EmptyTrainingSet: if H has no nonzero column
    """
    H = _as_training_matrix(H)
    nonzero = np.linalg.norm(H, axis=0) > 0
    if not nonzero.any():
        raise EmptyTrainingSet("every training channel is zero")
    if not nonzero.all():
        logger.warning(f"Dropping {int((~nonzero).sum())} zero training channels", LogCategory.CODEBOOK)
        H = H[:, nonzero]

    rng = np.random.default_rng(cfg.seed)
    A = _initial_atoms(H, cfg.atom_count, rng)
    reference = float(np.linalg.norm(H) ** 2)

    history: List[float] = []
    codes = np.zeros((cfg.atom_count, H.shape[1]), dtype=complex)
    for iteration in range(1, cfg.max_iters + 1):
        codes = sparse_coding_step(A, H, cfg.sparsity, workers=workers)
        A, codes = dictionary_update_step(A, codes, H)
        nmse = float(np.linalg.norm(H - A @ codes) ** 2) / reference
        history.append(nmse)
        logger.codebook_iteration(iteration, nmse)

        if nmse <= cfg.nmse_threshold or iteration == cfg.max_iters:
            break
        replaced = _clear_dictionary(A, codes, H)
        if replaced:
            logger.debug(f"Replaced {replaced} duplicate atoms", LogCategory.CODEBOOK)

    logger.codebook_trained(
        len(history),
        history[-1],
        details=f"atoms={cfg.atom_count} sparsity={cfg.sparsity} samples={H.shape[1]} seed={cfg.seed}",
    )
    meta = [{"atom": j} for j in range(cfg.atom_count)]
    return LearnedCodebook(
        dictionary=Dictionary(atoms=A, kind=DictionaryKind.LEARNED, grid_meta=meta),
        sparse_codes=codes,
        history=history,
    )


def constant_modulus_project(A: np.ndarray) -> np.ndarray:
    """
    Divide each entry by its own modulus and scale by 1/sqrt(N), N = number of rows.

    Entries with modulus at most CM_EPS map to 1/sqrt(N) (phase 0).
    """
    A = np.asarray(A, dtype=complex)
    scale = 1.0 / math.sqrt(A.shape[0])
    modulus = np.abs(A)
    small = modulus <= CM_EPS
    unit = np.where(small, 1.0 + 0j, A / np.where(small, 1.0, modulus))
    return unit * scale


def project_dictionary(dictionary: Dictionary) -> Dictionary:
    """Constant-modulus copy of a dictionary, same kind and grid records"""
    return Dictionary(
        atoms=constant_modulus_project(dictionary.atoms),
        kind=dictionary.kind,
        grid_meta=[dict(m, projected=True) for m in dictionary.grid_meta],
    )


def retrain_trigger(se_history: Sequence[float], baseline_se: float, decline_fraction: float, window: int = RETRAIN_WINDOW) -> bool:
    """True iff the trailing moving average of se_history is below (1 - decline_fraction) * baseline_se"""
    if not 0.0 < decline_fraction < 1.0:
        raise NonPositiveParameter(f"decline_fraction must lie in (0, 1), got {decline_fraction}")
    if not se_history:
        return False
    trailing = np.asarray(se_history[-window:], dtype=float)
    return bool(trailing.mean() < (1.0 - decline_fraction) * baseline_se)


class OfflineCodebookPolicy:
    """
    Keeps a learned codebook frozen and watches spectral efficiency for a
    substantial decline, at which point the codebook should be retrained.
    """

    def __init__(
        self,
        codebook: LearnedCodebook,
        baseline_se: Optional[float] = None,
        decline_fraction: float = 0.2,
        window: int = RETRAIN_WINDOW,
        project: bool = True,
    ):
        if not 0.0 < decline_fraction < 1.0:
            raise NonPositiveParameter(f"decline_fraction must lie in (0, 1), got {decline_fraction}")
        self.codebook = codebook
        self.baseline_se = baseline_se
        self.decline_fraction = decline_fraction
        self.window = window
        self.project = project
        self.se_history: List[float] = []
        self._deployed = project_dictionary(codebook.dictionary) if project else codebook.dictionary

    @property
    def dictionary(self) -> Dictionary:
        """The codebook as deployed (constant-modulus projected unless disabled)"""
        return self._deployed

    def record(self, se: float) -> bool:
        """Add an observed SE; the first observation becomes the baseline when none was given"""
        if self.baseline_se is None:
            self.baseline_se = float(se)
        self.se_history.append(float(se))
        return self.needs_retraining

    @property
    def needs_retraining(self) -> bool:
        if self.baseline_se is None:
            return False
        return retrain_trigger(self.se_history, self.baseline_se, self.decline_fraction, self.window)

    def retrain(self, H: np.ndarray, cfg: KsvdConfig, workers: int = 1) -> LearnedCodebook:
        """Fit a fresh codebook and restart monitoring"""
        logger.info("Retraining learned codebook", LogCategory.CODEBOOK)
        self.codebook = ksvd_learn(H, cfg, workers=workers)
        self._deployed = project_dictionary(self.codebook.dictionary) if self.project else self.codebook.dictionary
        self.se_history = []
        self.baseline_se = None
        return self.codebook
