"""Model checkpoints: a JSON header followed by a float64 parameter blob.

Layout::

    b"EXFC"                     magic
    u32 (little-endian)         header length in bytes
    header                      UTF-8 JSON, keys sorted
    blob                        little-endian float64, W0 (row-major), b0, W1, b1, ...

The header records ``format_version``, ``layer_dims``, ``activation``,
``param_count`` and a free-form ``metadata`` object.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ParseError
from .model import MlpModel, param_count

MAGIC = b"EXFC"
FORMAT_VERSION = 1


def to_bytes(model: MlpModel, metadata=None) -> bytes:
    header = {
        "format_version": FORMAT_VERSION,
        "layer_dims": list(model.layer_dims),
        "activation": model.activation,
        "param_count": model.param_count(),
        "metadata": metadata or {},
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    blob = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in model.params())
    return MAGIC + struct.pack("<I", len(head)) + head + blob


def from_bytes(raw: bytes, source="<bytes>"):
    """Returns ``(model, header)``."""
    if raw[:4] != MAGIC:
        raise ParseError(f"{source}: not a checkpoint (bad magic)")
    if len(raw) < 8:
        raise ParseError(f"{source}: truncated header length")
    (hlen,) = struct.unpack_from("<I", raw, 4)
    try:
        header = json.loads(raw[8 : 8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"{source}: unreadable header: {exc}") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise ParseError(f"{source}: unsupported format version {header.get('format_version')}")
    dims = [int(d) for d in header["layer_dims"]]
    count = param_count(dims)
    if header.get("param_count") != count:
        raise ParseError(f"{source}: header param_count does not match layer dims")
    blob = raw[8 + hlen :]
    if len(blob) != 8 * count:
        raise ParseError(f"{source}: expected {8 * count} parameter bytes, got {len(blob)}")
    flat = np.frombuffer(blob, dtype="<f8").astype(np.float64)
    params, pos = [], 0
    for a, b in zip(dims[:-1], dims[1:]):
        params.append(flat[pos : pos + a * b].reshape(a, b))
        pos += a * b
        params.append(flat[pos : pos + b].copy())
        pos += b
    model = MlpModel(tuple(dims), params[0::2], params[1::2], header.get("activation", "relu"))
    return model, header


def save(model: MlpModel, path, metadata=None):
    Path(path).write_bytes(to_bytes(model, metadata))


def load(path):
    path = Path(path)
    return from_bytes(path.read_bytes(), str(path))
