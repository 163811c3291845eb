"""Binary tensor container used for model weights and golden vectors.

Layout, fixed and versioned:

    magic   4 bytes  b"QMBW"
    version 1 byte   0x01
    hlen    4 bytes  little-endian uint32, JSON header byte length
    header  hlen bytes, UTF-8 JSON: [{"name": str, "dtype": "f64"|"f32",
                                      "shape": [int, ...]}, ...]
    payload concatenated little-endian tensor data in header order

Round-trips are bit-exact. Read failures are reported as distinct error
types so callers can tell a malformed header from a truncated payload.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import HeaderError, PayloadError

MAGIC = b"QMBW"
VERSION = 1

_DTYPES = {"f64": np.dtype("<f8"), "f32": np.dtype("<f4")}
_DTYPE_NAMES = {np.dtype(np.float64): "f64", np.dtype(np.float32): "f32"}


def save_tensors(tensors: dict[str, np.ndarray], path: str | Path) -> None:
    """Write named tensors to ``path`` in header order = insertion order."""
    entries = []
    blobs = []
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        if arr.dtype not in _DTYPE_NAMES:
            arr = arr.astype(np.float64)
        dtype_name = _DTYPE_NAMES[arr.dtype]
        entries.append({"name": name, "dtype": dtype_name, "shape": list(arr.shape)})
        blobs.append(np.ascontiguousarray(arr, dtype=_DTYPES[dtype_name]).tobytes())
    header = json.dumps(entries).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([VERSION]))
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_tensors(path: str | Path) -> dict[str, np.ndarray]:
    """Read a container back into an ordered name -> float array mapping.

    Raises
    ------
    HeaderError
        Bad magic, unsupported version, undecodable or ill-formed JSON,
        duplicate names, unknown dtype tags.
    PayloadError
        Payload shorter or longer than the header declares.
    """
    data = Path(path).read_bytes()
    if len(data) < 9 or data[:4] != MAGIC:
        raise HeaderError(f"{path}: not a QMBW container (bad magic)")
    if data[4] != VERSION:
        raise HeaderError(f"{path}: unsupported container version {data[4]}, expected {VERSION}")
    (hlen,) = struct.unpack("<I", data[5:9])
    if len(data) < 9 + hlen:
        raise HeaderError(f"{path}: header declares {hlen} bytes but file has {len(data) - 9}")
    try:
        entries = json.loads(data[9 : 9 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HeaderError(f"{path}: header is not valid JSON: {exc}") from exc
    if not isinstance(entries, list):
        raise HeaderError(f"{path}: header must be a JSON list, got {type(entries).__name__}")

    out: dict[str, np.ndarray] = {}
    offset = 9 + hlen
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict) or not {"name", "dtype", "shape"} <= set(entry):
            raise HeaderError(f"{path}: header entry {i} missing name/dtype/shape")
        name = entry["name"]
        if name in out:
            raise HeaderError(f"{path}: duplicate tensor name {name!r}")
        if entry["dtype"] not in _DTYPES:
            raise HeaderError(f"{path}: tensor {name!r} has unknown dtype {entry['dtype']!r}")
        shape = entry["shape"]
        if not isinstance(shape, list) or any(not isinstance(s, int) or s < 0 for s in shape):
            raise HeaderError(f"{path}: tensor {name!r} has invalid shape {shape!r}")
        dtype = _DTYPES[entry["dtype"]]
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * dtype.itemsize
        if offset + nbytes > len(data):
            raise PayloadError(
                f"{path}: payload truncated at tensor {name!r}: need {nbytes} bytes, have {len(data) - offset}"
            )
        arr = np.frombuffer(data[offset : offset + nbytes], dtype=dtype).reshape(shape)
        out[name] = arr.astype(arr.dtype.newbyteorder("="))
        offset += nbytes
    if offset != len(data):
        raise PayloadError(f"{path}: {len(data) - offset} trailing bytes after declared payload")
    return out
