"""Binary embedding-stream container and its key=value manifest sidecar.

Layout (all little-endian):

    header: magic "RMEM", format version u16, then u32 channels_key,
            channels_value, spatial, frame_count, flags (bit 0: the storable
            embeddings alias the query key)
    body, per frame: query key (channels_key*spatial float32, row-major),
            then, unless aliased, the storable key (channels_key*spatial
            float32) and value (channels_value*spatial float32), then a
            presence flag u8

Aliased files carry only the query key per frame, so they require
channels_value == channels_key; readers reconstruct the storable key and
value from the query key. Files are written atomically (temp + rename).
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .embeddings import KeyEmbedding, ShapeSpec, ValueEmbedding, _freeze
from .errors import ContainerError
from .streams import FrameRecord

MAGIC = b"RMEM"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHIIIII")
HEADER_SIZE = _HEADER.size


def stream_file_size(shape: ShapeSpec, frame_count: int, aliased: bool) -> int:
    """Exact byte size of a container with the given parameters."""
    per_frame = shape.key_dim * 4 + 1
    if not aliased:
        per_frame += shape.key_dim * 4 + shape.value_dim * 4
    return HEADER_SIZE + frame_count * per_frame


def _atomic_write(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def _is_aliased(frame: FrameRecord) -> bool:
    same_key = frame.qm_key is frame.query_key or np.array_equal(
        frame.qm_key.data, frame.query_key.data
    )
    if not same_key:
        return False
    return frame.qm_value.data is frame.query_key.data or (
        frame.qm_value.data.shape == frame.query_key.data.shape
        and np.array_equal(frame.qm_value.data, frame.query_key.data)
    )


def write_stream(path, frames, aliased: bool | None = None) -> bool:
    """Serialize frames to ``path``; returns whether the aliased layout was used.

    ``aliased=None`` picks the aliased layout automatically when every frame's
    storable embeddings alias its query key.
    """
    if not frames:
        raise ContainerError("refusing to write an empty stream")
    shape = frames[0].query_key.shape
    if aliased is None:
        aliased = shape.channels_value == shape.channels_key and all(
            _is_aliased(f) for f in frames
        )
    if aliased and shape.channels_value != shape.channels_key:
        raise ContainerError("aliased layout requires channels_value == channels_key")
    parts = [
        _HEADER.pack(
            MAGIC,
            FORMAT_VERSION,
            shape.channels_key,
            shape.channels_value,
            shape.spatial,
            len(frames),
            1 if aliased else 0,
        )
    ]
    for frame in frames:
        if frame.query_key.shape != shape:
            raise ContainerError("all frames must share one shape")
        parts.append(frame.query_key.data.astype("<f4").tobytes(order="C"))
        if not aliased:
            parts.append(frame.qm_key.data.astype("<f4").tobytes(order="C"))
            parts.append(frame.qm_value.data.astype("<f4").tobytes(order="C"))
        parts.append(struct.pack("<B", 1 if frame.ground_truth_present else 0))
    _atomic_write(Path(path), b"".join(parts))
    return aliased


def read_stream(path):
    """Parse a container; returns (frames, info dict).

    info carries ``shape``, ``frame_count`` and ``aliased``. Bad magic, an
    unsupported version, or a size inconsistent with the header all raise
    :class:`ContainerError`.
    """
    raw = Path(path).read_bytes()
    if len(raw) < HEADER_SIZE:
        raise ContainerError("truncated header")
    magic, version, ck, cv, hw, count, flags = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ContainerError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ContainerError(f"unsupported format version {version}")
    aliased = bool(flags & 1)
    if aliased and cv != ck:
        raise ContainerError("aliased container with channels_value != channels_key")
    shape = ShapeSpec(ck, cv, hw)
    if len(raw) != stream_file_size(shape, count, aliased):
        raise ContainerError("file size does not match the header")

    key_bytes = shape.key_dim * 4
    value_bytes = shape.value_dim * 4
    offset = HEADER_SIZE
    frames = []
    for index in range(count):
        def matrix(nbytes, rows):
            nonlocal offset
            block = np.frombuffer(raw, dtype="<f4", count=nbytes // 4, offset=offset)
            offset += nbytes
            return _freeze(block.astype(np.float64).reshape(rows, hw))

        query_data = matrix(key_bytes, ck)
        query_key = KeyEmbedding(shape, query_data, index)
        if aliased:
            qm_key = query_key
            qm_value = ValueEmbedding(shape, query_data, index)
        else:
            qm_key = KeyEmbedding(shape, matrix(key_bytes, ck), index)
            qm_value = ValueEmbedding(shape, matrix(value_bytes, cv), index)
        present = raw[offset] != 0
        offset += 1
        frames.append(FrameRecord(index, query_key, qm_key, qm_value, present))
    info = {"shape": shape, "frame_count": count, "aliased": aliased}
    return frames, info


def manifest_path(stream_path) -> Path:
    return Path(str(stream_path) + ".manifest")


def write_manifest(path, entries: dict) -> None:
    """Write key=value lines (one per entry, in the given order)."""
    text = "".join(f"{key}={value}\n" for key, value in entries.items())
    _atomic_write(Path(path), text.encode("utf-8"))


def read_manifest(path) -> dict:
    entries = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        entries[key] = value
    return entries
