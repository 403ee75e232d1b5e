"""Diversity-maximizing bounded memory for streaming feature embeddings.

The package keeps a fixed number of (key, value) embedding slots for a
stream of frames. Incoming frames are matched against the stored slots with
sparse soft attention; a frame is admitted only when substituting it into
some slot increases the log-determinant of the bank's similarity Gram matrix,
after a presence gate on its similarity to the protected annotated frame.
Transition maps built from the attention weights re-index stored keys into
the query's spatial layout before any similarity is measured, compensating
object motion between distant frames.

A synthetic-stream harness, brute-force oracles, an episode runner, a binary
stream container, and a CLI round out the package.
"""

from .association import (
    VARIANT_COLUMNS,
    VARIANT_HUNGARIAN,
    VARIANT_ROWS,
    TransitionMap,
    build_transition,
    project,
    slice_weights,
    transition_from_columns,
    transition_from_rows,
    transition_hungarian,
)
from .attention import (
    AffinityTensor,
    WeightTensor,
    affinity,
    readout,
    soft_weights,
    topk_sparsify,
)
from .container import (
    manifest_path,
    read_manifest,
    read_stream,
    stream_file_size,
    write_manifest,
    write_stream,
)
from .embeddings import (
    KeyEmbedding,
    ShapeSpec,
    ValueEmbedding,
    flatten,
    new_key,
    new_value,
    normalize_key,
    unflatten,
)
from .engine import (
    ACTION_ADJACENT_ONLY,
    ACTION_INSERTED_INIT,
    ACTION_REJECTED_LSB,
    ACTION_REJECTED_NO_GAIN,
    ACTION_REPLACED,
    ACTION_SKIPPED,
    EngineConfig,
    MemoryBank,
    Slot,
    UpdateDecision,
    bank_from_embeddings,
    current_gramian,
    init_engine,
    observe,
    observe_fifo,
    step,
)
from .episodes import FrameRow, MetricsRecord, record_to_csv, record_to_summary, run_episode
from .errors import (
    ConfigError,
    ContainerError,
    DegenerateKeyError,
    FrameOrderError,
    NonFiniteError,
    ProtectedSlotError,
    ShapeMismatchError,
)
from .gramian import (
    SINGULAR,
    CandidateSet,
    GramState,
    apply_substitution,
    build_gram,
    candidate_substitutions,
    log_abs_det,
    similarity,
)
from .oracles import (
    det_cofactor,
    oracle_log_abs_det,
    oracle_offline_best_subset,
    oracle_substitution,
    oracle_trials,
)
from .streams import (
    AreaChange,
    Composite,
    CyclicShift,
    Distractor,
    FrameRecord,
    SlowDrift,
    Stationary,
    StreamSpec,
    format_regime,
    generate_stream,
    make_area_fixture,
    make_permutation_fixture,
    parse_regime,
    recovered_similarity,
)

__version__ = "0.1.0"
