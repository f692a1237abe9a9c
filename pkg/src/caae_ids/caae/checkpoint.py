"""Versioned binary checkpoints.

Layout (all integers little-endian)::

    "CAAE" | u32 version | u32 tensor count
    per tensor: u16 name length | name (utf-8) | u8 rank | u32 extents[rank]
    tensor data: float32 little-endian, row-major, in directory order

An encoder-only export is the same container with only the ``encoder.*``
tensors. The training epoch travels as the 1-element tensor ``meta.epoch``.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointError, IoError
from .model import CaaeModel

MAGIC = b"CAAE"
VERSION = 1
_EPOCH_KEY = "meta.epoch"


def _pack_directory(tensors: dict[str, np.ndarray]) -> bytes:
    out = bytearray(MAGIC + struct.pack("<II", VERSION, len(tensors)))
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        out += struct.pack("<H", len(raw)) + raw
        out += struct.pack("<B", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
    for arr in tensors.values():
        out += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    return bytes(out)


def save_checkpoint(model: CaaeModel, path: str | Path, encoder_only: bool = False) -> None:
    """Write ``model`` to ``path``; ``encoder_only`` keeps just the detector weights."""
    tensors = {}
    for p in model.params():
        if encoder_only and not p.name.startswith("encoder."):
            continue
        tensors[p.name] = p.value
    tensors[_EPOCH_KEY] = np.array([model.epoch], dtype=np.float32)
    try:
        Path(path).write_bytes(_pack_directory(tensors))
    except OSError as exc:
        raise IoError(f"cannot write checkpoint {path}: {exc}") from exc


def read_tensors(path: str | Path) -> dict[str, np.ndarray]:
    """Parse a checkpoint into ``{name: float32 array}``.

    Raises:
        CheckpointError: bad magic, unsupported version, truncation or an
            inconsistent directory.
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < 12:
        raise CheckpointError(f"{path}: truncated header")
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:4]!r}")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    pos = 12
    directory = []
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", raw, pos)
            pos += 2
            name = raw[pos:pos + name_len].decode("utf-8")
            if len(name.encode("utf-8")) != name_len:
                raise CheckpointError(f"{path}: truncated tensor name")
            pos += name_len
            (rank,) = struct.unpack_from("<B", raw, pos)
            pos += 1
            shape = struct.unpack_from(f"<{rank}I", raw, pos)
            pos += 4 * rank
            directory.append((name, shape))
    except (struct.error, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: truncated tensor directory") from exc
    tensors = {}
    for name, shape in directory:
        n = int(np.prod(shape, dtype=np.int64))
        end = pos + 4 * n
        if end > len(raw):
            raise CheckpointError(f"{path}: truncated data for tensor {name}")
        tensors[name] = np.frombuffer(raw, dtype="<f4", count=n, offset=pos).reshape(shape).astype(np.float32)
        pos = end
    if pos != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - pos} trailing bytes")
    return tensors


def load_checkpoint(path: str | Path) -> CaaeModel:
    """Rebuild a model from a full or encoder-only checkpoint."""
    tensors = read_tensors(path)
    encoder_only = not any(name.startswith("decoder.") for name in tensors)
    model = CaaeModel(encoder_only=encoder_only)
    expected = {p.name: p for p in model.params()}
    missing = expected.keys() - tensors.keys()
    unknown = tensors.keys() - expected.keys() - {_EPOCH_KEY}
    if missing or unknown:
        raise CheckpointError(
            f"{path}: tensor set mismatch (missing {sorted(missing)}, unknown {sorted(unknown)})"
        )
    for name, param in expected.items():
        if tensors[name].shape != param.shape:
            raise CheckpointError(f"{path}: {name} has shape {tensors[name].shape}, expected {param.shape}")
        param.value = tensors[name].copy()
        param.zero_grad()
    if _EPOCH_KEY in tensors:
        model.epoch = int(tensors[_EPOCH_KEY][0])
    return model
