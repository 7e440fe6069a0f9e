"""Binary parameter checkpoints.

Layout: the 8-byte magic ``GIPA0001`` followed by one record per tensor:
name length (u32), UTF-8 name, rows (u64), cols (u64), then rows*cols
float64 values in row-major order. Everything is little-endian and records
run until end of file.
"""
import logging
import struct
from pathlib import Path
from typing import Dict, Mapping, Union

import numpy as np

from gipa.exceptions import CheckpointError

logger = logging.getLogger(__name__)

MAGIC = b"GIPA0001"
_NAME_LEN = struct.Struct("<I")
_DIMS = struct.Struct("<QQ")


def encode_checkpoint(tensors: Mapping[str, np.ndarray]) -> bytes:
    chunks = [MAGIC]
    for name, value in tensors.items():
        value = np.asarray(value, dtype="<f8")
        if value.ndim != 2:
            raise CheckpointError(f"tensor {name} is not 2-D")
        encoded = name.encode("utf-8")
        chunks.append(_NAME_LEN.pack(len(encoded)))
        chunks.append(encoded)
        chunks.append(_DIMS.pack(*value.shape))
        chunks.append(np.ascontiguousarray(value).tobytes())
    return b"".join(chunks)


def _take(data: bytes, offset: int, size: int, what: str) -> bytes:
    if offset + size > len(data):
        raise CheckpointError(f"checkpoint truncated while reading {what}")
    return data[offset:offset + size]


def decode_checkpoint(data: bytes) -> Dict[str, np.ndarray]:
    if data[:len(MAGIC)] != MAGIC:
        raise CheckpointError("not a GIPA checkpoint (bad magic)")
    tensors = {}
    offset = len(MAGIC)
    while offset < len(data):
        (name_len,) = _NAME_LEN.unpack(_take(data, offset, _NAME_LEN.size, "name length"))
        offset += _NAME_LEN.size
        try:
            name = _take(data, offset, name_len, "name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError("tensor name is not valid UTF-8") from exc
        offset += name_len
        rows, cols = _DIMS.unpack(_take(data, offset, _DIMS.size, f"shape of {name}"))
        offset += _DIMS.size
        payload = _take(data, offset, rows * cols * 8, f"values of {name}")
        offset += rows * cols * 8
        if name in tensors:
            raise CheckpointError(f"duplicate tensor {name}")
        tensors[name] = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(rows, cols)
    return tensors


def save_checkpoint(path: Union[str, Path], tensors: Mapping[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(tensors))
    logger.info("wrote checkpoint %s (%d tensors)", path, len(tensors))
    return path


def load_checkpoint(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return decode_checkpoint(data)


def apply_checkpoint(named_parameters: Mapping, tensors: Mapping[str, np.ndarray]) -> None:
    """Copy tensors into the matching Parameters; names and shapes must agree exactly."""
    missing = sorted(set(named_parameters) - set(tensors))
    unknown = sorted(set(tensors) - set(named_parameters))
    if missing or unknown:
        raise CheckpointError(f"checkpoint does not match model: missing {missing}, unknown {unknown}")
    for name, param in named_parameters.items():
        if tensors[name].shape != param.value.shape:
            raise CheckpointError(
                f"{name}: checkpoint shape {tensors[name].shape}, model shape {param.value.shape}")
    for name, param in named_parameters.items():
        param.value[...] = tensors[name]
