"""Embedding tensors and the unit-norm geometry everything else consumes.

A key is a ``channels_key x spatial`` matrix of semantic features for one
frame, a value the ``channels_value x spatial`` counterpart carrying
appearance detail. Keys are L2-normalized over their row-major flattened
vector so that every key-to-key inner product is a cosine similarity in
[-1, 1]; values are never normalized (they are only blended, never compared).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateKeyError, NonFiniteError, ShapeMismatchError

# Norms within this distance of 1 are treated as already normalized, which
# makes normalize_key exactly idempotent.
_UNIT_TOL = 1e-12


def _freeze(data: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(data, dtype=np.float64)
    if out is data:
        out = out.copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ShapeSpec:
    """Channel and spatial dimensions shared by all embeddings of one engine."""

    channels_key: int
    channels_value: int
    spatial: int

    def __post_init__(self):
        for name in ("channels_key", "channels_value", "spatial"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")

    @property
    def key_dim(self) -> int:
        """Length of a flattened key vector."""
        return self.channels_key * self.spatial

    @property
    def value_dim(self) -> int:
        return self.channels_value * self.spatial


def _validated(data: np.ndarray, rows: int, cols: int) -> None:
    if data.shape != (rows, cols):
        raise ShapeMismatchError(f"expected a {rows}x{cols} matrix, got {data.shape}")
    if not np.all(np.isfinite(data)):
        raise NonFiniteError("embedding entries must be finite")


@dataclass(frozen=True, eq=False)
class KeyEmbedding:
    """Semantic feature matrix (channels_key x spatial) for one frame."""

    shape: ShapeSpec
    data: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        _validated(self.data, self.shape.channels_key, self.shape.spatial)
        if self.frame_index < 0:
            raise ConfigError("frame_index must be non-negative")


@dataclass(frozen=True, eq=False)
class ValueEmbedding:
    """Appearance feature matrix (channels_value x spatial) for one frame."""

    shape: ShapeSpec
    data: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        _validated(self.data, self.shape.channels_value, self.shape.spatial)
        if self.frame_index < 0:
            raise ConfigError("frame_index must be non-negative")


def new_key(raw, shape: ShapeSpec, frame_index: int = 0) -> KeyEmbedding:
    """Validate and wrap a raw channels_key x spatial matrix. Not normalized."""
    data = np.array(raw, dtype=np.float64, order="C")
    return KeyEmbedding(shape, _freeze(data), frame_index)


def new_value(raw, shape: ShapeSpec, frame_index: int = 0) -> ValueEmbedding:
    """Validate and wrap a raw channels_value x spatial matrix."""
    data = np.array(raw, dtype=np.float64, order="C")
    return ValueEmbedding(shape, _freeze(data), frame_index)


def normalize_key(key: KeyEmbedding) -> KeyEmbedding:
    """Scale a key so its flattened vector has unit Euclidean norm.

    Already-normalized keys are returned unchanged, so the operation is
    exactly idempotent. A numerically zero key cannot be normalized.
    """
    norm = float(np.linalg.norm(key.data))
    if norm < _UNIT_TOL:
        raise DegenerateKeyError("cannot normalize a zero-norm key")
    if abs(norm - 1.0) <= _UNIT_TOL:
        return key
    return KeyEmbedding(key.shape, _freeze(key.data / norm), key.frame_index)


def flatten(key: KeyEmbedding) -> np.ndarray:
    """Row-major flattening of the key matrix into a C_k*HW vector."""
    return key.data.flatten(order="C")


def unflatten(vec, shape: ShapeSpec, frame_index: int = 0) -> KeyEmbedding:
    """Inverse of :func:`flatten`; round-trips losslessly."""
    data = np.asarray(vec, dtype=np.float64)
    if data.ndim != 1 or data.size != shape.key_dim:
        raise ShapeMismatchError(
            f"expected a flat vector of length {shape.key_dim}, got shape {data.shape}"
        )
    return KeyEmbedding(
        shape, _freeze(data.reshape(shape.channels_key, shape.spatial)), frame_index
    )
