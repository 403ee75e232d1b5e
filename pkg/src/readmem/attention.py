"""Memory-to-query matching: affinity, top-k sparsification, soft weights, readout.

The raw affinity of N memory keys against one query key is the (N*HW) x HW
matrix of all pairwise column inner products, F[i, j] = sum_c K[c, i] * q[c, j]
with K the column-concatenation of the memory keys in slot order. A per-column
top-k filter zeroes everything but each column's k largest entries, and a
column softmax over all N*HW rows (zeroed entries participate as exp(0))
produces column-stochastic weights. The readout blends the concatenated memory
values with those weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .embeddings import KeyEmbedding, ValueEmbedding, _freeze
from .errors import ConfigError, ShapeMismatchError

STAGE_RAW = "raw"
STAGE_SPARSE = "sparse"


@dataclass(frozen=True, eq=False)
class AffinityTensor:
    """(N*HW) x HW affinity matrix, either raw or top-k sparsified."""

    data: np.ndarray
    slots: int
    stage: str


@dataclass(frozen=True, eq=False)
class WeightTensor:
    """Column-stochastic (N*HW) x HW soft-attention weights."""

    data: np.ndarray
    slots: int


def affinity(memory_keys: Sequence[KeyEmbedding], query_key: KeyEmbedding) -> AffinityTensor:
    """Raw affinity between every memory key column and every query column."""
    if not memory_keys:
        raise ConfigError("memory must contain at least one key")
    shape = query_key.shape
    for key in memory_keys:
        if key.shape != shape:
            raise ShapeMismatchError("memory and query keys must share one shape")
    stacked = np.concatenate([key.data for key in memory_keys], axis=1)
    return AffinityTensor(_freeze(stacked.T @ query_key.data), len(memory_keys), STAGE_RAW)


def topk_sparsify(aff: AffinityTensor, k: int) -> AffinityTensor:
    """Keep each column's min(k, N*HW) largest entries, zero the rest.

    Ties break toward the smaller row index. k >= N*HW degenerates to the
    identity transform.
    """
    if k < 1:
        raise ConfigError("top-k width must be >= 1")
    if aff.stage != STAGE_RAW:
        raise ValueError("topk_sparsify expects a raw affinity tensor")
    data = aff.data
    rows = data.shape[0]
    keep = min(k, rows)
    if keep == rows:
        sparse = data.copy()
    else:
        # Stable sort on the negated values: equal entries keep row order,
        # so the smaller row index wins ties.
        order = np.argsort(-data, axis=0, kind="stable")
        mask = np.zeros(data.shape, dtype=bool)
        mask[order[:keep, :], np.arange(data.shape[1])[None, :]] = True
        sparse = np.where(mask, data, 0.0)
    return AffinityTensor(_freeze(sparse), aff.slots, STAGE_SPARSE)


def soft_weights(sparse: AffinityTensor) -> WeightTensor:
    """Column-wise softmax over all N*HW rows of a sparsified affinity.

    The per-column maximum is subtracted before exponentiation for overflow
    safety; the result is mathematically unchanged.
    """
    if sparse.stage != STAGE_SPARSE:
        raise ValueError("soft_weights expects a sparsified affinity tensor")
    shifted = sparse.data - sparse.data.max(axis=0, keepdims=True)
    expo = np.exp(shifted)
    weights = expo / expo.sum(axis=0, keepdims=True)
    return WeightTensor(_freeze(weights), sparse.slots)


def readout(
    memory_values: Sequence[ValueEmbedding],
    weights: WeightTensor,
    frame_index: int = 0,
) -> ValueEmbedding:
    """Blend concatenated memory values with the attention weights."""
    if len(memory_values) != weights.slots:
        raise ShapeMismatchError(
            f"weight tensor has {weights.slots} slots, got {len(memory_values)} values"
        )
    shape = memory_values[0].shape
    for value in memory_values:
        if value.shape != shape:
            raise ShapeMismatchError("memory values must share one shape")
    if weights.data.shape != (weights.slots * shape.spatial, shape.spatial):
        raise ShapeMismatchError("weight tensor does not match the value shape")
    stacked = np.concatenate([value.data for value in memory_values], axis=1)
    return ValueEmbedding(shape, _freeze(stacked @ weights.data), frame_index)
