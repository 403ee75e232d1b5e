"""Bounded memory bank with diversity-driven slot replacement.

The bank holds N (key, value) slots. Slot 1 permanently holds the annotated
first frame and is never replaced. An optional adjacent slot carries the
previous frame's embeddings: it participates in attention but never in the
Gram matrix. Each observed frame runs the attention pass; frames on the
sampling interval are then candidates for insertion:

1. Every stored key is projected into the query's frame of reference through
   a transition map built from the configured attention source (unless the
   association variant is ``off``).
2. A presence gate rejects the frame when the projected slot-1 key's
   similarity to the candidate embedding does not exceed ``lsb_threshold``.
3. While the bank is still filling (``every_tth`` initialization), accepted
   frames are appended and the Gram matrix rebuilt from the stored keys.
4. Once full, the frame is inserted only if substituting it into some slot
   strictly increases the log-abs-determinant of the Gram matrix; the winning
   slot's row/column is overwritten with the fresh (projected) similarities,
   which stay frozen there until that slot is replaced again.

``observe_fifo`` implements the baseline policy: identical attention pass, no
gating, no determinant test; every interval-eligible frame replaces the oldest
non-annotated slot.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .association import VARIANTS, build_transition, project, slice_weights
from .attention import AffinityTensor, WeightTensor, affinity, readout, soft_weights, topk_sparsify
from .embeddings import KeyEmbedding, ShapeSpec, ValueEmbedding, normalize_key
from .errors import ConfigError, FrameOrderError, ShapeMismatchError
from .gramian import (
    CandidateSet,
    GramState,
    apply_substitution,
    build_gram,
    candidate_substitutions,
    similarity,
)

STRATEGY_READMEM = "readmem"
STRATEGY_FIFO = "fifo"
STRATEGIES = (STRATEGY_READMEM, STRATEGY_FIFO)

REA_OFF = "off"
REA_VARIANTS = VARIANTS + (REA_OFF,)
REA_SOURCES = ("weights", "affinity")
INIT_STRATEGIES = ("every_tth", "annotated_fill")

ACTION_INSERTED_INIT = "inserted_init"
ACTION_REPLACED = "replaced_slot"
ACTION_REJECTED_LSB = "rejected_lsb"
ACTION_REJECTED_NO_GAIN = "rejected_no_gain"
ACTION_SKIPPED = "skipped_interval"
ACTION_ADJACENT_ONLY = "adjacent_only"


@dataclass(frozen=True)
class EngineConfig:
    """Engine parameters. Defaults follow the reference operating point."""

    shape: ShapeSpec
    slots: int = 20
    sampling_interval: int = 10
    topk: int = 20
    lsb_threshold: float = 0.5
    strategy: str = STRATEGY_READMEM
    rea_variant: str = "argmax_columns"
    rea_source: str = "weights"
    init_strategy: str = "every_tth"
    use_adjacent: bool = True
    dme_enabled: bool = True

    def __post_init__(self):
        if self.slots < 2:
            raise ConfigError("slots must be >= 2")
        if self.slots > self.shape.key_dim:
            raise ConfigError(
                f"slots ({self.slots}) must not exceed the key dimension "
                f"({self.shape.key_dim}); the Gram matrix would be singular"
            )
        if self.sampling_interval < 1:
            raise ConfigError("sampling_interval must be >= 1")
        if self.topk < 1:
            raise ConfigError("topk must be >= 1")
        if not -1.0 <= self.lsb_threshold <= 1.0:
            raise ConfigError("lsb_threshold must lie in [-1, 1]")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if self.rea_variant not in REA_VARIANTS:
            raise ConfigError(f"unknown rea_variant {self.rea_variant!r}")
        if self.rea_source not in REA_SOURCES:
            raise ConfigError(f"unknown rea_source {self.rea_source!r}")
        if self.init_strategy not in INIT_STRATEGIES:
            raise ConfigError(f"unknown init_strategy {self.init_strategy!r}")


@dataclass(frozen=True)
class Slot:
    key: KeyEmbedding
    value: ValueEmbedding
    frame_index: int


@dataclass
class UpdateDecision:
    """Outcome of observing one frame."""

    action: str
    gramian_before: float
    gramian_after: float
    slot: Optional[int] = None
    lsb_score: Optional[float] = None
    candidates: Optional[CandidateSet] = None

    @property
    def candidate_max(self) -> Optional[float]:
        if self.candidates is None:
            return None
        return max(val for _, val in self.candidates.values)


@dataclass
class MemoryBank:
    """Mutable engine state; single-owner, one observation at a time."""

    config: EngineConfig
    slots: list[Slot]
    gram: GramState
    fill_count: int
    last_frame_index: int
    adjacent: Optional[tuple[KeyEmbedding, ValueEmbedding]] = None

    @property
    def annotated(self) -> Slot:
        return self.slots[0]

    def stored_keys(self) -> list[KeyEmbedding]:
        return [slot.key for slot in self.slots]

    def copy(self) -> "MemoryBank":
        return MemoryBank(
            config=self.config,
            slots=list(self.slots),
            gram=self.gram,
            fill_count=self.fill_count,
            last_frame_index=self.last_frame_index,
            adjacent=self.adjacent,
        )


def init_engine(
    config: EngineConfig, annotated_key: KeyEmbedding, annotated_value: ValueEmbedding
) -> MemoryBank:
    """Fresh bank seeded with the annotated frame (normalized on entry).

    ``every_tth`` starts with one filled slot; ``annotated_fill`` copies the
    annotated embeddings into every slot, leaving a singular Gram matrix.
    """
    _check_key_shape(config, annotated_key)
    _check_value_shape(config, annotated_value)
    key = normalize_key(annotated_key)
    first = Slot(key, annotated_value, key.frame_index)
    if config.init_strategy == "annotated_fill":
        slots = [first] * config.slots
        fill = config.slots
    else:
        slots = [first]
        fill = 1
    return MemoryBank(
        config=config,
        slots=slots,
        gram=build_gram([slot.key for slot in slots]),
        fill_count=fill,
        last_frame_index=key.frame_index,
    )


def bank_from_embeddings(
    config: EngineConfig,
    keys,
    values,
    frame_indices=None,
) -> MemoryBank:
    """Bank assembled directly from slot contents (testing and oracle plumbing)."""
    if not 1 <= len(keys) <= config.slots:
        raise ConfigError(f"need between 1 and {config.slots} slots, got {len(keys)}")
    if len(values) != len(keys):
        raise ShapeMismatchError("keys and values must pair up")
    if frame_indices is None:
        frame_indices = list(range(len(keys)))
    slots = []
    for key, value, idx in zip(keys, values, frame_indices):
        _check_key_shape(config, key)
        _check_value_shape(config, value)
        slots.append(Slot(normalize_key(key), value, idx))
    return MemoryBank(
        config=config,
        slots=slots,
        gram=build_gram([slot.key for slot in slots]),
        fill_count=len(slots),
        last_frame_index=max(frame_indices),
    )


def current_gramian(bank: MemoryBank) -> float:
    """Log-abs-determinant of the stored slots' Gram matrix (adjacent excluded)."""
    return bank.gram.log_abs_det


def observe(
    bank: MemoryBank,
    frame_index: int,
    query_key: KeyEmbedding,
    qm_key: KeyEmbedding,
    qm_value: ValueEmbedding,
) -> tuple[WeightTensor, ValueEmbedding, UpdateDecision, MemoryBank]:
    """Process one frame under the diversity-replacement policy.

    ``qm_key``/``qm_value`` are the frame's storable embeddings; harnesses
    without a separate memory encoder may alias them to the query key.
    """
    query_key, qm_key = _prepare(bank, frame_index, query_key, qm_key, qm_value)
    aff, weights, read = _attention_pass(bank, query_key)
    cfg = bank.config
    before = bank.gram.log_abs_det

    if frame_index % cfg.sampling_interval != 0:
        decision = UpdateDecision(ACTION_SKIPPED, before, before)
    elif not cfg.dme_enabled:
        decision = UpdateDecision(ACTION_ADJACENT_ONLY, before, before)
    else:
        source = weights if cfg.rea_source == "weights" else aff
        pseudo_first = _pseudo_key(bank, source, 1)
        lsb = similarity(pseudo_first, qm_key)
        if lsb <= cfg.lsb_threshold:
            decision = UpdateDecision(ACTION_REJECTED_LSB, before, before, lsb_score=lsb)
        elif bank.fill_count < cfg.slots:
            bank.slots.append(Slot(qm_key, qm_value, frame_index))
            bank.fill_count += 1
            bank.gram = build_gram(bank.stored_keys())
            decision = UpdateDecision(
                ACTION_INSERTED_INIT,
                before,
                bank.gram.log_abs_det,
                slot=bank.fill_count,
                lsb_score=lsb,
            )
        else:
            sims = np.empty(bank.fill_count)
            sims[0] = lsb
            for slot in range(2, bank.fill_count + 1):
                sims[slot - 1] = similarity(_pseudo_key(bank, source, slot), qm_key)
            cands = candidate_substitutions(bank.gram, sims, 1.0)
            best_slot, best_val = cands.best()
            if best_val > bank.gram.log_abs_det:
                bank.gram = apply_substitution(bank.gram, best_slot, sims, 1.0)
                bank.slots[best_slot - 1] = Slot(qm_key, qm_value, frame_index)
                assert bank.gram.log_abs_det > before
                decision = UpdateDecision(
                    ACTION_REPLACED,
                    before,
                    bank.gram.log_abs_det,
                    slot=best_slot,
                    lsb_score=lsb,
                    candidates=cands,
                )
            else:
                decision = UpdateDecision(
                    ACTION_REJECTED_NO_GAIN, before, before, lsb_score=lsb, candidates=cands
                )

    _finish(bank, frame_index, qm_key, qm_value)
    return weights, read, decision, bank


def observe_fifo(
    bank: MemoryBank,
    frame_index: int,
    query_key: KeyEmbedding,
    qm_key: KeyEmbedding,
    qm_value: ValueEmbedding,
) -> tuple[WeightTensor, ValueEmbedding, UpdateDecision, MemoryBank]:
    """Baseline policy: interval-eligible frames evict the oldest non-annotated slot."""
    query_key, qm_key = _prepare(bank, frame_index, query_key, qm_key, qm_value)
    _, weights, read = _attention_pass(bank, query_key)
    cfg = bank.config
    before = bank.gram.log_abs_det

    if frame_index % cfg.sampling_interval != 0:
        decision = UpdateDecision(ACTION_SKIPPED, before, before)
    elif bank.fill_count < cfg.slots:
        bank.slots.append(Slot(qm_key, qm_value, frame_index))
        bank.fill_count += 1
        bank.gram = build_gram(bank.stored_keys())
        decision = UpdateDecision(
            ACTION_INSERTED_INIT, before, bank.gram.log_abs_det, slot=bank.fill_count
        )
    else:
        oldest = min(range(2, bank.fill_count + 1), key=lambda s: bank.slots[s - 1].frame_index)
        bank.slots[oldest - 1] = Slot(qm_key, qm_value, frame_index)
        bank.gram = build_gram(bank.stored_keys())
        decision = UpdateDecision(ACTION_REPLACED, before, bank.gram.log_abs_det, slot=oldest)

    _finish(bank, frame_index, qm_key, qm_value)
    return weights, read, decision, bank


def step(bank, frame_index, query_key, qm_key, qm_value):
    """Dispatch to the bank's configured strategy."""
    fn = observe if bank.config.strategy == STRATEGY_READMEM else observe_fifo
    return fn(bank, frame_index, query_key, qm_key, qm_value)


def _check_key_shape(config: EngineConfig, key: KeyEmbedding) -> None:
    if key.shape != config.shape:
        raise ShapeMismatchError(f"key shape {key.shape} does not match engine {config.shape}")


def _check_value_shape(config: EngineConfig, value: ValueEmbedding) -> None:
    if value.shape != config.shape:
        raise ShapeMismatchError(
            f"value shape {value.shape} does not match engine {config.shape}"
        )


def _prepare(bank, frame_index, query_key, qm_key, qm_value):
    if frame_index <= bank.last_frame_index:
        raise FrameOrderError(
            f"frame {frame_index} does not follow frame {bank.last_frame_index}"
        )
    _check_key_shape(bank.config, query_key)
    _check_key_shape(bank.config, qm_key)
    _check_value_shape(bank.config, qm_value)
    return normalize_key(query_key), normalize_key(qm_key)


def _attention_pass(bank, query_key):
    keys = bank.stored_keys()
    values = [slot.value for slot in bank.slots]
    if bank.config.use_adjacent and bank.adjacent is not None:
        keys.append(bank.adjacent[0])
        values.append(bank.adjacent[1])
    aff = affinity(keys, query_key)
    weights = soft_weights(topk_sparsify(aff, bank.config.topk))
    read = readout(values, weights, frame_index=query_key.frame_index)
    return aff, weights, read


def _pseudo_key(bank, source, slot: int) -> KeyEmbedding:
    key = bank.slots[slot - 1].key
    if bank.config.rea_variant == REA_OFF:
        return key
    block = slice_weights(source, slot)
    tmap = build_transition(block, bank.config.rea_variant, source_slot=slot)
    return project(key, tmap)


def _finish(bank, frame_index, qm_key, qm_value) -> None:
    if bank.config.use_adjacent:
        bank.adjacent = (qm_key, qm_value)
    bank.last_frame_index = frame_index
