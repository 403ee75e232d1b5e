"""Transition maps that re-index a memory key into the query's spatial layout.

Comparing two frames through a single global inner product underestimates
their similarity once the object has moved. A transition map uses a memory
slot's block of the attention weights to pick, per spatial position, the
best-matching source position, and projecting the key through that map yields
a pseudo key expressed in the query's frame of reference. Three constructions
are supported:

- ``argmax_columns``: per target column, the best source row. Sources may be
  re-used, so a grown foreground can draw repeatedly on a smaller one.
- ``argmax_rows``: per source row, its best target column; columns may then
  receive zero or several sources (summed under dense-product semantics).
- ``hungarian``: a maximum-weight perfect assignment (bijection).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .embeddings import KeyEmbedding, _freeze, normalize_key
from .errors import ConfigError, ShapeMismatchError

VARIANT_COLUMNS = "argmax_columns"
VARIANT_ROWS = "argmax_rows"
VARIANT_HUNGARIAN = "hungarian"
VARIANTS = (VARIANT_COLUMNS, VARIANT_ROWS, VARIANT_HUNGARIAN)


@dataclass(frozen=True, eq=False)
class TransitionMap:
    """Sparse encoding of a 0/1 HW x HW spatial re-indexing for one slot.

    For the column variants (``argmax_columns``, ``hungarian``) ``mapping[j]``
    is the source position selected for target column j. For ``argmax_rows``
    ``mapping[i]`` is the target column chosen by source row i.
    """

    source_slot: int
    variant: str
    mapping: np.ndarray

    def dense(self) -> np.ndarray:
        """Materialize the 0/1 transition matrix."""
        hw = self.mapping.shape[0]
        t = np.zeros((hw, hw))
        if self.variant == VARIANT_ROWS:
            t[np.arange(hw), self.mapping] = 1.0
        else:
            t[self.mapping, np.arange(hw)] = 1.0
        return t


def slice_weights(tensor, slot: int) -> np.ndarray:
    """Rows [(slot-1)*HW, slot*HW) of an attention tensor (1-based slot)."""
    hw = tensor.data.shape[1]
    if not 1 <= slot <= tensor.slots:
        raise ConfigError(f"slot {slot} out of range for a {tensor.slots}-slot tensor")
    lo = (slot - 1) * hw
    return np.array(tensor.data[lo : lo + hw, :])


def _square(block) -> np.ndarray:
    b = np.asarray(block, dtype=np.float64)
    if b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise ShapeMismatchError(f"expected a square block, got shape {b.shape}")
    return b


def transition_from_columns(block, source_slot: int = 1) -> TransitionMap:
    """Per target column, select the best source row (ties: smallest row)."""
    b = _square(block)
    return TransitionMap(source_slot, VARIANT_COLUMNS, _freeze_idx(np.argmax(b, axis=0)))


def transition_from_rows(block, source_slot: int = 1) -> TransitionMap:
    """Per source row, select its best target column (ties: smallest column)."""
    b = _square(block)
    return TransitionMap(source_slot, VARIANT_ROWS, _freeze_idx(np.argmax(b, axis=1)))


def transition_hungarian(block, source_slot: int = 1) -> TransitionMap:
    """Permutation maximizing the total selected weight (perfect assignment)."""
    b = _square(block)
    row_ind, col_ind = linear_sum_assignment(b, maximize=True)
    mapping = np.empty(b.shape[0], dtype=np.int64)
    mapping[col_ind] = row_ind
    return TransitionMap(source_slot, VARIANT_HUNGARIAN, _freeze_idx(mapping))


_BUILDERS = {
    VARIANT_COLUMNS: transition_from_columns,
    VARIANT_ROWS: transition_from_rows,
    VARIANT_HUNGARIAN: transition_hungarian,
}


def build_transition(block, variant: str, source_slot: int = 1) -> TransitionMap:
    try:
        builder = _BUILDERS[variant]
    except KeyError:
        raise ConfigError(f"unknown transition variant {variant!r}") from None
    return builder(block, source_slot)


def project(key: KeyEmbedding, tmap: TransitionMap) -> KeyEmbedding:
    """Pseudo key of ``key`` expressed in the query's frame of reference.

    The result is re-normalized: column duplication (or summation, for the
    rows variant) can change the flattened norm, which would break the
    [-1, 1] similarity contract downstream.
    """
    hw = key.shape.spatial
    if tmap.mapping.shape[0] != hw:
        raise ShapeMismatchError("transition map does not match the key's spatial size")
    if tmap.variant == VARIANT_ROWS:
        data = key.data @ tmap.dense()
    else:
        data = key.data[:, tmap.mapping]
    pseudo = KeyEmbedding(key.shape, _freeze(data), key.frame_index)
    return normalize_key(pseudo)


def _freeze_idx(mapping: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(mapping, dtype=np.int64)
    if out is mapping:
        out = out.copy()
    out.flags.writeable = False
    return out
