"""Episode runner and per-frame metrics.

An episode initializes the bank from frame 0 (the annotated frame) and
observes the rest of the stream in order, logging one row per frame. Rows
carry the bank's log-abs-determinant after the frame's decision, so the
trajectory of the diversity score can be read straight off the record.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Optional

from .engine import EngineConfig, MemoryBank, current_gramian, init_engine, step
from .errors import ConfigError, ShapeMismatchError

CSV_COLUMNS = ("frame", "action", "log_abs_det", "lsb_score", "winning_slot", "candidate_max")


@dataclass(frozen=True)
class FrameRow:
    frame_index: int
    action: str
    log_abs_det: float
    lsb_score: Optional[float]
    winning_slot: Optional[int]
    candidate_max: Optional[float]


@dataclass
class MetricsRecord:
    rows: list[FrameRow]
    final_log_abs_det: float
    action_counts: dict[str, int]
    oracle_agreement: Optional[float] = None


def run_episode(
    config: EngineConfig, stream, bank_out: Optional[list[MemoryBank]] = None
) -> MetricsRecord:
    """Run one engine over a stream; frame 0 plays the annotated-frame role.

    ``bank_out``, when given, receives the final bank (appended) for callers
    that need to inspect slot contents.
    """
    if not stream:
        raise ConfigError("cannot run an episode over an empty stream")
    first = stream[0]
    if first.query_key.shape != config.shape:
        raise ShapeMismatchError(
            f"stream shape {first.query_key.shape} does not match engine {config.shape}"
        )
    bank = init_engine(config, first.qm_key, first.qm_value)
    rows: list[FrameRow] = []
    counts: Counter = Counter()
    for frame in stream[1:]:
        _, _, decision, bank = step(
            bank, frame.frame_index, frame.query_key, frame.qm_key, frame.qm_value
        )
        rows.append(
            FrameRow(
                frame_index=frame.frame_index,
                action=decision.action,
                log_abs_det=bank.gram.log_abs_det,
                lsb_score=decision.lsb_score,
                winning_slot=decision.slot,
                candidate_max=decision.candidate_max,
            )
        )
        counts[decision.action] += 1
    if bank_out is not None:
        bank_out.append(bank)
    return MetricsRecord(
        rows=rows,
        final_log_abs_det=current_gramian(bank),
        action_counts=dict(sorted(counts.items())),
    )


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def record_to_csv(record: MetricsRecord) -> str:
    """CSV text with columns frame,action,log_abs_det,lsb_score,winning_slot,candidate_max."""
    lines = [",".join(CSV_COLUMNS)]
    for row in record.rows:
        lines.append(
            ",".join(
                (
                    str(row.frame_index),
                    row.action,
                    _cell(row.log_abs_det),
                    _cell(row.lsb_score),
                    _cell(row.winning_slot),
                    _cell(row.candidate_max),
                )
            )
        )
    return "\n".join(lines) + "\n"


def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    return value


def record_to_summary(record: MetricsRecord, config: EngineConfig) -> str:
    """Deterministic JSON summary: final score, action counts, config echo."""
    cfg = asdict(config)
    payload = {
        "final_log_abs_det": _jsonable(record.final_log_abs_det),
        "actions": record.action_counts,
        "config": cfg,
    }
    if record.oracle_agreement is not None:
        payload["oracle_agreement"] = record.oracle_agreement
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"
