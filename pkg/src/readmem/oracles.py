"""Brute-force oracles the engine is checked against.

All determinant work here deliberately avoids the engine's Cholesky path:
cofactor expansion for small matrices, LU (slogdet) above that. The
substitution oracle rebuilds every candidate Gram matrix from the raw keys and
re-derives the replacement decision; the offline oracle enumerates every
admissible slot subset of a whole stream.
"""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np

from .embeddings import KeyEmbedding, ShapeSpec, ValueEmbedding, _freeze, normalize_key
from .engine import (
    ACTION_REJECTED_NO_GAIN,
    ACTION_REPLACED,
    EngineConfig,
    bank_from_embeddings,
    observe,
)
from .errors import ConfigError

COFACTOR_LIMIT = 6
_ORACLE_MAX_SLOTS = 8


def det_cofactor(matrix: np.ndarray) -> float:
    """Determinant by recursive cofactor expansion along the first row."""
    m = np.asarray(matrix, dtype=np.float64)
    n = m.shape[0]
    if m.shape != (n, n):
        raise ConfigError(f"expected a square matrix, got shape {m.shape}")
    if n > _ORACLE_MAX_SLOTS:
        raise ConfigError(f"cofactor expansion limited to {_ORACLE_MAX_SLOTS}x{_ORACLE_MAX_SLOTS}")
    return _det_rec(m)


def _det_rec(m: np.ndarray) -> float:
    n = m.shape[0]
    if n == 1:
        return float(m[0, 0])
    if n == 2:
        return float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])
    total = 0.0
    cols = np.arange(n)
    for j in range(n):
        minor = m[1:][:, cols != j]
        sign = -1.0 if j % 2 else 1.0
        total += sign * float(m[0, j]) * _det_rec(minor)
    return total


def oracle_log_abs_det(matrix: np.ndarray, cofactor_limit: int = COFACTOR_LIMIT) -> float:
    """log|det| by cofactor expansion (small) or LU factorization (larger)."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.shape[0] <= cofactor_limit:
        det = det_cofactor(m)
        return float("-inf") if det == 0.0 else float(np.log(abs(det)))
    _, logdet = np.linalg.slogdet(m)
    return float(logdet)


def _gram_of(keys) -> np.ndarray:
    stacked = np.stack([k.data.reshape(-1) for k in keys], axis=1)
    gram = stacked.T @ stacked
    return (gram + gram.T) / 2.0


def oracle_substitution(bank_keys, query_key: KeyEmbedding):
    """Exhaustive re-derivation of the replacement decision.

    Rebuilds the Gram matrix of every candidate key list (slot 1 is never
    substituted), computes exact determinants, and applies the same strict
    improvement rule and smallest-slot tie rule as the engine. Returns
    (action, slot or None, {label: log_abs_det}).
    """
    n = len(bank_keys)
    if n > _ORACLE_MAX_SLOTS:
        raise ConfigError(f"instance too large for the exact oracle (N <= {_ORACLE_MAX_SLOTS})")
    keys = [normalize_key(k) for k in bank_keys]
    query = normalize_key(query_key)
    logdets = {"current": oracle_log_abs_det(_gram_of(keys))}
    best_slot = None
    best_val = float("-inf")
    for slot in range(2, n + 1):
        cand_keys = list(keys)
        cand_keys[slot - 1] = query
        val = oracle_log_abs_det(_gram_of(cand_keys))
        logdets[slot] = val
        if val > best_val:
            best_slot, best_val = slot, val
    if best_slot is not None and best_val > logdets["current"]:
        return ACTION_REPLACED, best_slot, logdets
    return ACTION_REJECTED_NO_GAIN, None, logdets


def oracle_offline_best_subset(stream, n_slots: int, budget: int):
    """Exhaustive search for the most diverse slot assignment of a stream.

    Enumerates every size-``n_slots`` subset of frames that contains frame 0
    and returns (best frame indices, best log_abs_det). Refuses instances
    whose enumeration exceeds ``budget`` subsets.
    """
    keys = [normalize_key(f.qm_key) for f in stream]
    if n_slots < 1 or n_slots > len(keys):
        raise ConfigError("n_slots must lie in [1, stream length]")
    count = math.comb(len(keys) - 1, n_slots - 1)
    if count > budget:
        raise ConfigError(f"enumeration of {count} subsets exceeds the budget of {budget}")
    best_subset = None
    best_val = float("-inf")
    for combo in combinations(range(1, len(keys)), n_slots - 1):
        subset = (0,) + combo
        val = oracle_log_abs_det(_gram_of([keys[i] for i in subset]))
        if val > best_val:
            best_subset, best_val = subset, val
    return best_subset, best_val


def oracle_trials(
    trials: int,
    *,
    slots: int = 5,
    channels_key: int = 4,
    spatial: int = 8,
    seed: int = 0,
    inject_fault: bool = False,
):
    """Randomized engine-vs-oracle agreement suite.

    Each trial builds a full bank (sometimes containing a near-duplicate
    pair), draws a query (sometimes near-parallel to a stored key), runs the
    engine with association off and the presence gate disabled, and compares
    its decision to :func:`oracle_substitution`. Returns (agreements, trials).

    ``inject_fault`` corrupts the first trial's engine decision; the suite
    must then report a disagreement (harness self-test).
    """
    if trials < 0:
        raise ConfigError("trials must be >= 0")
    shape = ShapeSpec(channels_key, channels_key, spatial)
    config = EngineConfig(
        shape=shape,
        slots=slots,
        sampling_interval=1,
        lsb_threshold=-1.0,
        rea_variant="off",
        use_adjacent=False,
    )
    rng = np.random.default_rng(seed)
    dim = shape.key_dim
    agreements = 0
    for trial in range(trials):
        raw = rng.standard_normal((slots, dim))
        mode = rng.random()
        if mode < 0.25 and slots >= 3:
            a, b = rng.choice(slots, size=2, replace=False)
            raw[b] = raw[a] + 1e-3 * rng.standard_normal(dim)
        if 0.25 <= mode < 0.5:
            target = int(rng.integers(slots))
            query_vec = raw[target] + 1e-3 * rng.standard_normal(dim)
        else:
            query_vec = rng.standard_normal(dim)
        keys = [
            KeyEmbedding(shape, _freeze(raw[i].reshape(shape.channels_key, spatial)), i)
            for i in range(slots)
        ]
        values = [ValueEmbedding(shape, keys[i].data, i) for i in range(slots)]
        query = KeyEmbedding(shape, _freeze(query_vec.reshape(shape.channels_key, spatial)), slots)
        qvalue = ValueEmbedding(shape, query.data, slots)

        bank = bank_from_embeddings(config, keys, values)
        stored = bank.stored_keys()
        _, _, decision, _ = observe(bank, slots, query, query, qvalue)
        engine_action, engine_slot = decision.action, decision.slot
        if inject_fault and trial == 0:
            engine_action = (
                ACTION_REJECTED_NO_GAIN if engine_action == ACTION_REPLACED else ACTION_REPLACED
            )
            engine_slot = None if engine_action == ACTION_REJECTED_NO_GAIN else 2
        oracle_action, oracle_slot, _ = oracle_substitution(stored, query)
        if engine_action == oracle_action and engine_slot == oracle_slot:
            agreements += 1
    return agreements, trials
