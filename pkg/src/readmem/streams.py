"""Synthetic embedding streams: the desk-scale stand-in for video features.

Every stream draws one foreground signature vector and one background
signature per spatial column; a frame's key places the foreground signature on
a (regime-dependent) subset of columns and the background signatures
elsewhere. Regimes perturb that base frame:

- ``stationary``: the base frame plus per-frame noise.
- ``slow_drift(rate)``: the flattened vector rotates in a fixed random plane
  by ``rate`` radians per frame.
- ``cyclic_shift(period)``: spatial columns roll by ``frame // period``
  positions.
- ``area_change(p_min, p_max)``: the foreground fraction ramps linearly from
  ``p_min`` at the first frame to ``p_max`` at the last, over a fixed column
  order (so foreground sets are nested).
- ``distractor(start, end)``: inside [start, end] the foreground signature is
  swapped for an orthogonal one and ``ground_truth_present`` is False.
- ``composite([...])``: column-level effects (area, distractor, shifts) apply
  first, then flattened-vector rotations, then noise.

Noise is isotropic on the flattened vector before normalization. Identical
(spec, seed) pairs generate bit-identical streams.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .association import build_transition, project, slice_weights
from .attention import affinity, soft_weights, topk_sparsify
from .embeddings import KeyEmbedding, ShapeSpec, ValueEmbedding, _freeze, normalize_key
from .errors import ConfigError
from .gramian import similarity

#: Fraction of columns carrying the foreground signature outside area regimes.
DEFAULT_FOREGROUND_FRACTION = 0.75


@dataclass(frozen=True)
class Stationary:
    pass


@dataclass(frozen=True)
class SlowDrift:
    rate: float


@dataclass(frozen=True)
class CyclicShift:
    period: int


@dataclass(frozen=True)
class AreaChange:
    p_min: float
    p_max: float


@dataclass(frozen=True)
class Distractor:
    start: int
    end: int


@dataclass(frozen=True)
class Composite:
    parts: tuple


Regime = Union[Stationary, SlowDrift, CyclicShift, AreaChange, Distractor, Composite]


@dataclass(frozen=True)
class StreamSpec:
    shape: ShapeSpec
    length: int
    regime: Regime = field(default_factory=Stationary)
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.length < 1:
            raise ConfigError("stream length must be >= 1")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        _validate_regime(self.regime, self.length)


@dataclass(frozen=True, eq=False)
class FrameRecord:
    frame_index: int
    query_key: KeyEmbedding
    qm_key: KeyEmbedding
    qm_value: ValueEmbedding
    ground_truth_present: bool


def _primitives(regime: Regime) -> list:
    if isinstance(regime, Composite):
        out = []
        for part in regime.parts:
            out.extend(_primitives(part))
        return out
    return [regime]


def _validate_regime(regime: Regime, length: int) -> None:
    for part in _primitives(regime):
        if isinstance(part, SlowDrift):
            if not np.isfinite(part.rate):
                raise ConfigError("drift rate must be finite")
        elif isinstance(part, CyclicShift):
            if part.period < 1:
                raise ConfigError("cyclic shift period must be >= 1")
        elif isinstance(part, AreaChange):
            if not (0.0 < part.p_min <= part.p_max <= 1.0):
                raise ConfigError("area fractions must satisfy 0 < p_min <= p_max <= 1")
        elif isinstance(part, Distractor):
            if not (0 <= part.start <= part.end < length):
                raise ConfigError("distractor window must satisfy 0 <= start <= end < length")
        elif not isinstance(part, Stationary):
            raise ConfigError(f"unknown regime component {part!r}")


def _unit(vec: np.ndarray) -> np.ndarray:
    return vec / np.linalg.norm(vec)


def _orthogonal_unit(rng: np.random.Generator, ref: np.ndarray) -> np.ndarray:
    vec = rng.standard_normal(ref.shape[0])
    vec -= ref * np.dot(ref, vec)
    return _unit(vec)


def _rotate(vec: np.ndarray, angle: float, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Proper rotation in the plane spanned by the orthonormal pair (a, b);
    # components outside the plane are untouched.
    ca = np.dot(a, vec)
    cb = np.dot(b, vec)
    cos_t = np.cos(angle)
    sin_t = np.sin(angle)
    return vec + (cos_t - 1.0) * (ca * a + cb * b) + sin_t * (ca * b - cb * a)


def generate_stream(spec: StreamSpec) -> list[FrameRecord]:
    """Deterministic list of frames for the given spec and seed."""
    rng = np.random.default_rng(spec.seed)
    shape = spec.shape
    ck, cv, hw = shape.channels_key, shape.channels_value, shape.spatial
    parts = _primitives(spec.regime)
    areas = [p for p in parts if isinstance(p, AreaChange)]
    shifts = [p for p in parts if isinstance(p, CyclicShift)]
    windows = [p for p in parts if isinstance(p, Distractor)]
    drifts = [p for p in parts if isinstance(p, SlowDrift)]

    fg_key = _unit(rng.standard_normal(ck))
    distractor_key = _orthogonal_unit(rng, fg_key)
    bg_keys = rng.standard_normal((ck, hw))
    bg_keys /= np.linalg.norm(bg_keys, axis=0, keepdims=True)
    fg_value = rng.standard_normal(cv)
    distractor_value = rng.standard_normal(cv)
    bg_values = rng.standard_normal((cv, hw))
    column_order = rng.permutation(hw)
    aliased = cv == ck

    def fg_count(t: int) -> int:
        if areas:
            area = areas[0]
            frac = area.p_min
            if spec.length > 1:
                frac += (area.p_max - area.p_min) * (t / (spec.length - 1))
        else:
            frac = DEFAULT_FOREGROUND_FRACTION
        return int(np.clip(round(frac * hw), 1, hw))

    def columns_for(t: int, present: bool):
        mask = np.zeros(hw, dtype=bool)
        mask[column_order[: fg_count(t)]] = True
        key_sig = fg_key if present else distractor_key
        val_sig = fg_value if present else distractor_value
        key_cols = np.where(mask[None, :], key_sig[:, None], bg_keys)
        val_cols = np.where(mask[None, :], val_sig[:, None], bg_values)
        for part in shifts:
            roll = t // part.period
            key_cols = np.roll(key_cols, roll, axis=1)
            val_cols = np.roll(val_cols, roll, axis=1)
        return key_cols, val_cols

    # Drift planes are anchored at the clean frame-0 direction.
    planes = []
    if drifts:
        base0 = _unit(columns_for(0, True)[0].ravel())
        for part in drifts:
            planes.append((base0, _orthogonal_unit(rng, base0), part.rate))

    frames = []
    for t in range(spec.length):
        present = not any(w.start <= t <= w.end for w in windows)
        key_cols, val_cols = columns_for(t, present)
        vec = key_cols.ravel()
        for a, b, rate in planes:
            vec = _rotate(vec, rate * t, a, b)
        if spec.noise_sigma > 0:
            vec = vec + spec.noise_sigma * rng.standard_normal(vec.size)
            val_cols = val_cols + spec.noise_sigma * rng.standard_normal(val_cols.shape)
        query_key = normalize_key(KeyEmbedding(shape, _freeze(vec.reshape(ck, hw)), t))
        if aliased:
            qm_value = ValueEmbedding(shape, query_key.data, t)
        else:
            qm_value = ValueEmbedding(shape, _freeze(val_cols), t)
        frames.append(FrameRecord(t, query_key, query_key, qm_value, present))
    return frames


# Regime text form used by manifests and the command line, e.g.
# "slow_drift:0.01" or "slow_drift:0.01+distractor:40:80".

def parse_regime(text: str) -> Regime:
    parts = []
    for token in text.split("+"):
        token = token.strip()
        name, _, rest = token.partition(":")
        args = rest.split(":") if rest else []
        try:
            if name == "stationary" and not args:
                parts.append(Stationary())
            elif name == "slow_drift" and len(args) == 1:
                parts.append(SlowDrift(float(args[0])))
            elif name == "cyclic_shift" and len(args) == 1:
                parts.append(CyclicShift(int(args[0])))
            elif name == "area_change" and len(args) == 2:
                parts.append(AreaChange(float(args[0]), float(args[1])))
            elif name == "distractor" and len(args) == 2:
                parts.append(Distractor(int(args[0]), int(args[1])))
            else:
                raise ConfigError(f"unknown regime {token!r}")
        except ValueError as exc:
            raise ConfigError(f"bad regime parameter in {token!r}: {exc}") from exc
    if not parts:
        raise ConfigError("empty regime")
    if len(parts) == 1:
        return parts[0]
    return Composite(tuple(parts))


def format_regime(regime: Regime) -> str:
    if isinstance(regime, Composite):
        return "+".join(format_regime(p) for p in regime.parts)
    if isinstance(regime, Stationary):
        return "stationary"
    if isinstance(regime, SlowDrift):
        return f"slow_drift:{regime.rate!r}"
    if isinstance(regime, CyclicShift):
        return f"cyclic_shift:{regime.period}"
    if isinstance(regime, AreaChange):
        return f"area_change:{regime.p_min!r}:{regime.p_max!r}"
    if isinstance(regime, Distractor):
        return f"distractor:{regime.start}:{regime.end}"
    raise ConfigError(f"unknown regime {regime!r}")


# Deterministic two-frame fixtures for the association ablations.

def make_permutation_fixture(shape: ShapeSpec, seed: int = 0):
    """Query with orthonormal spatial columns and a memory key holding a
    derangement of them. Returns (memory_key, query_key, permutation)."""
    if shape.channels_key < shape.spatial:
        raise ConfigError("permutation fixture needs channels_key >= spatial")
    rng = np.random.default_rng(seed)
    q_cols, _ = np.linalg.qr(rng.standard_normal((shape.channels_key, shape.spatial)))
    perm = _derangement(rng, shape.spatial)
    query = normalize_key(KeyEmbedding(shape, _freeze(q_cols), 0))
    memory = normalize_key(KeyEmbedding(shape, _freeze(q_cols[:, perm]), 0))
    return memory, query, perm


def _derangement(rng: np.random.Generator, n: int) -> np.ndarray:
    if n < 2:
        raise ConfigError("a derangement needs at least two columns")
    while True:
        perm = rng.permutation(n)
        if not np.any(perm == np.arange(n)):
            return perm


def make_area_fixture(
    shape: ShapeSpec,
    p_memory: float,
    p_query: float,
    seed: int = 0,
    noise_sigma: float = 0.0,
):
    """Memory and query sharing one foreground signature over nested column
    sets of fractions p_memory and p_query. Returns (memory_key, query_key)."""
    if not (0.0 < p_memory <= 1.0 and 0.0 < p_query <= 1.0):
        raise ConfigError("foreground fractions must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    ck, hw = shape.channels_key, shape.spatial
    fg = _unit(rng.standard_normal(ck))
    bg = rng.standard_normal((ck, hw))
    bg /= np.linalg.norm(bg, axis=0, keepdims=True)
    order = rng.permutation(hw)

    def build(frac):
        count = int(np.clip(round(frac * hw), 1, hw))
        mask = np.zeros(hw, dtype=bool)
        mask[order[:count]] = True
        cols = np.where(mask[None, :], fg[:, None], bg)
        if noise_sigma > 0:
            cols = cols + noise_sigma * rng.standard_normal(cols.shape)
        return normalize_key(KeyEmbedding(shape, _freeze(cols), 0))

    return build(p_memory), build(p_query)


def recovered_similarity(
    memory_key: KeyEmbedding,
    query_key: KeyEmbedding,
    variant: str,
    source: str = "weights",
    topk: int = 20,
) -> float:
    """Similarity between the query and the memory key after the full matching
    pipeline (affinity, top-k, softmax, transition, projection).

    ``variant="off"`` skips the projection and returns the raw similarity.
    """
    memory = normalize_key(memory_key)
    query = normalize_key(query_key)
    if variant == "off":
        return similarity(memory, query)
    aff = affinity([memory], query)
    weights = soft_weights(topk_sparsify(aff, topk))
    tensor = weights if source == "weights" else aff
    tmap = build_transition(slice_weights(tensor, 1), variant)
    return similarity(project(memory, tmap), query)
