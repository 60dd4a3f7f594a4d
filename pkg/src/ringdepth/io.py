"""Binary artifact formats: tensor files, checkpoints, depth previews.

Tensor file layout (magic ``RDT1``)::

    "RDT1"  (4 bytes)
    rank    (u8)
    extents (rank x u32, little-endian)
    payload (f32, little-endian, row-major)

A checkpoint is a UTF-8 header (metadata JSON plus a name table) followed
by the concatenated tensor blobs of every parameter, written in sorted
name order so identical parameter sets produce identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping, Union

import numpy as np

from .errors import FormatError

_MAGIC = b"RDT1"
_CKPT_MAGIC = "RDCK1"


def _tensor_bytes(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    if arr.ndim > 255:
        raise FormatError(f"rank {arr.ndim} exceeds the u8 rank field")
    if any(e > 0xFFFFFFFF for e in arr.shape):
        raise FormatError(f"extent too large for u32 in shape {arr.shape}")
    header = _MAGIC + struct.pack("<B", arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + arr.tobytes()


def _tensor_from_bytes(buf: bytes, offset: int, where: str) -> tuple[np.ndarray, int]:
    if buf[offset:offset + 4] != _MAGIC:
        raise FormatError(f"{where}: bad magic, not an RDT1 tensor")
    offset += 4
    if offset >= len(buf):
        raise FormatError(f"{where}: truncated before rank byte")
    rank = buf[offset]
    offset += 1
    need = 4 * rank
    if offset + need > len(buf):
        raise FormatError(f"{where}: truncated extents")
    shape = struct.unpack(f"<{rank}I", buf[offset:offset + need])
    offset += need
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    nbytes = 4 * count
    if offset + nbytes > len(buf):
        raise FormatError(f"{where}: payload truncated "
                          f"(need {nbytes} bytes for shape {shape})")
    arr = np.frombuffer(buf, dtype="<f4", count=count, offset=offset)
    offset += nbytes
    return arr.reshape(shape).astype(np.float32), offset


def write_rdt(path: Union[str, Path], arr) -> None:
    """Write one array as an RDT1 tensor file (payload cast to f32)."""
    data = arr.data if hasattr(arr, "data") and isinstance(arr.data, np.ndarray) else arr
    Path(path).write_bytes(_tensor_bytes(np.asarray(data)))


def read_rdt(path: Union[str, Path]) -> np.ndarray:
    """Read an RDT1 tensor file; raises :class:`FormatError` naming the path."""
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as e:
        raise FormatError(f"{path}: {e}") from e
    arr, end = _tensor_from_bytes(buf, 0, str(path))
    if end != len(buf):
        raise FormatError(f"{path}: {len(buf) - end} trailing bytes")
    return arr


def save_checkpoint(path: Union[str, Path], params: Mapping[str, object],
                    meta: dict) -> None:
    """Write a named-parameter checkpoint with a metadata block.

    ``params`` maps names to arrays (or array-holding tensors); ``meta``
    must be JSON-serializable (the model configuration goes here).
    """
    names = sorted(params)
    blobs = []
    lines = [_CKPT_MAGIC, "meta " + json.dumps(meta, sort_keys=True),
             f"count {len(names)}"]
    for name in names:
        if not name or any(c.isspace() for c in name):
            raise FormatError(f"invalid parameter name {name!r}")
        p = params[name]
        data = p.data if hasattr(p, "data") and isinstance(p.data, np.ndarray) else p
        blob = _tensor_bytes(np.asarray(data))
        lines.append(f"{name} {len(blob)}")
        blobs.append(blob)
    lines.append("DATA")
    header = ("\n".join(lines) + "\n").encode("utf-8")
    Path(path).write_bytes(header + b"".join(blobs))


def load_checkpoint(path: Union[str, Path]) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint back as ``(name -> f32 array, meta dict)``."""
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as e:
        raise FormatError(f"{path}: {e}") from e
    sep = buf.find(b"\nDATA\n")
    if sep < 0:
        raise FormatError(f"{path}: missing DATA marker")
    try:
        lines = buf[:sep].decode("utf-8").split("\n")
    except UnicodeDecodeError as e:
        raise FormatError(f"{path}: header is not UTF-8") from e
    if not lines or lines[0] != _CKPT_MAGIC:
        raise FormatError(f"{path}: bad checkpoint magic")
    if len(lines) < 3 or not lines[1].startswith("meta "):
        raise FormatError(f"{path}: missing meta line")
    try:
        meta = json.loads(lines[1][5:])
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: meta is not valid JSON") from e
    if not lines[2].startswith("count "):
        raise FormatError(f"{path}: missing count line")
    count = int(lines[2].split()[1])
    entries = lines[3:]
    if len(entries) != count:
        raise FormatError(f"{path}: name table has {len(entries)} entries, "
                          f"count says {count}")
    params: dict[str, np.ndarray] = {}
    offset = sep + len(b"\nDATA\n")
    for entry in entries:
        parts = entry.rsplit(" ", 1)
        if len(parts) != 2:
            raise FormatError(f"{path}: malformed name-table line {entry!r}")
        name, nbytes = parts[0], int(parts[1])
        arr, end = _tensor_from_bytes(buf, offset, f"{path}:{name}")
        if end - offset != nbytes:
            raise FormatError(f"{path}:{name}: blob length mismatch")
        params[name] = arr
        offset = end
    if offset != len(buf):
        raise FormatError(f"{path}: {len(buf) - offset} trailing bytes")
    return params, meta


def write_pgm16(path: Union[str, Path], depth: np.ndarray, d_max: float) -> None:
    """Write a depth map as a 16-bit binary portable graymap preview.

    Values are ``round(depth / d_max * 65535)`` clipped to the u16 range;
    the payload is big-endian per the graymap convention for maxval > 255.
    """
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2:
        raise FormatError(f"graymap preview expects a 2-D map, got {depth.shape}")
    vals = np.clip(np.round(depth / d_max * 65535.0), 0, 65535).astype(">u2")
    h, w = depth.shape
    header = f"P5\n{w} {h}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + vals.tobytes())
