"""Gram matrix of the memory bank and the log-determinant diversity score.

det(G) of the pairwise-similarity matrix is the squared volume of the
parallelotope spanned by the flattened keys; its log-absolute value is the
diversity score that drives slot replacement. Determinants are held and
compared in log space because realistic magnitudes sit many orders below 1.
Singular matrices map to a -inf sentinel instead of raising, so a bank
containing duplicates still compares meaningfully against (and loses to) any
diversity-increasing candidate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .embeddings import KeyEmbedding, _freeze
from .errors import ConfigError, ProtectedSlotError, ShapeMismatchError

#: Sentinel log-abs-determinant of a singular matrix.
SINGULAR = float("-inf")

_SYM_TOL = 1e-10
_PSD_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class GramState:
    """Immutable N x N similarity matrix plus its cached log-abs-determinant.

    The matrix doubles as the pairwise-similarity cache: entries are frozen at
    insertion time and are not re-derived from the keys afterwards.
    """

    matrix: np.ndarray
    log_abs_det: float

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def pair_similarity(self, a: int, b: int) -> float:
        """Cached similarity between slots a and b (1-based)."""
        return float(self.matrix[a - 1, b - 1])


@dataclass(frozen=True)
class CandidateSet:
    """Log-abs-determinants of substituting the query into each slot 2..N."""

    values: tuple[tuple[int, float], ...]

    def best(self) -> tuple[int, float]:
        """Highest-valued candidate; ties break to the smallest slot index."""
        best_slot, best_val = self.values[0]
        for slot, val in self.values[1:]:
            if val > best_val:
                best_slot, best_val = slot, val
        return best_slot, best_val


def similarity(a: KeyEmbedding, b: KeyEmbedding) -> float:
    """Inner product of the flattened keys (cosine similarity when normalized)."""
    if a.shape != b.shape:
        raise ShapeMismatchError("keys must share one shape")
    return float(np.dot(a.data.reshape(-1), b.data.reshape(-1)))


def build_gram(keys: Sequence[KeyEmbedding]) -> GramState:
    """Gram matrix of pairwise key similarities, with its log-abs-determinant."""
    if not keys:
        raise ConfigError("cannot build a Gram matrix from zero keys")
    stacked = np.stack([key.data.reshape(-1) for key in keys], axis=1)
    gram = stacked.T @ stacked
    gram = (gram + gram.T) / 2.0
    return GramState(_freeze(gram), log_abs_det(gram))


def log_abs_det(matrix: np.ndarray, *, sym_tol: float = _SYM_TOL, psd_tol: float = _PSD_TOL) -> float:
    """log|det| of a symmetric matrix, Cholesky-based when positive definite.

    Positive semidefinite matrices that are singular beyond tolerance map to
    the :data:`SINGULAR` sentinel. Indefinite symmetric matrices (substituting
    projected query similarities into a frozen matrix can produce them) fall
    back to an LU factorization of the absolute determinant. Non-symmetric
    input raises.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise ShapeMismatchError(f"expected a square matrix, got shape {m.shape}")
    if np.max(np.abs(m - m.T)) > sym_tol:
        raise ValueError("matrix is not symmetric within tolerance")
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        smallest = float(np.linalg.eigvalsh(m)[0])
        if smallest < -psd_tol:
            _, logdet = np.linalg.slogdet(m)
            return float(logdet)
        return SINGULAR
    diag = np.diagonal(chol)
    if np.any(diag <= 0.0):
        return SINGULAR
    return float(2.0 * np.sum(np.log(diag)))


def _substituted(matrix: np.ndarray, slot: int, sims: np.ndarray, self_sim: float) -> np.ndarray:
    cand = matrix.copy()
    i = slot - 1
    cand[i, :] = sims
    cand[:, i] = sims
    cand[i, i] = self_sim
    return cand


def candidate_substitutions(
    state: GramState, query_sims, query_self_sim: float = 1.0
) -> CandidateSet:
    """Log-abs-determinant of substituting the query into each slot 2..N.

    ``query_sims[a-1]`` is the similarity between the (possibly projected)
    slot-a key and the candidate query key. Slot 1 is protected and never
    substituted.
    """
    n = state.size
    if n < 2:
        raise ConfigError("no substitutable slot: the bank holds only the protected slot")
    sims = np.asarray(query_sims, dtype=np.float64)
    if sims.shape != (n,):
        raise ShapeMismatchError(f"expected {n} query similarities, got shape {sims.shape}")
    entries = []
    for slot in range(2, n + 1):
        entries.append((slot, log_abs_det(_substituted(state.matrix, slot, sims, query_self_sim))))
    return CandidateSet(tuple(entries))


def apply_substitution(
    state: GramState, slot: int, query_sims, query_self_sim: float = 1.0
) -> GramState:
    """New state with row/column ``slot`` replaced by the query similarities."""
    if slot == 1:
        raise ProtectedSlotError("slot 1 holds the annotated frame and cannot be replaced")
    if not 2 <= slot <= state.size:
        raise ConfigError(f"slot {slot} out of range for a {state.size}-slot state")
    sims = np.asarray(query_sims, dtype=np.float64)
    if sims.shape != (state.size,):
        raise ShapeMismatchError(
            f"expected {state.size} query similarities, got shape {sims.shape}"
        )
    cand = _substituted(state.matrix, slot, sims, query_self_sim)
    return GramState(_freeze(cand), log_abs_det(cand))
