"""Checkpoint container: JSON header plus raw little-endian float64 arrays.

Layout: 7-byte magic ``PPTNET1``, a little-endian uint32 header length, the
UTF-8 JSON header (config, optional normalization stats, and a parameter
manifest of name/shape/byte-offset), then the concatenated arrays.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

from .errors import CheckpointError
from .model import PPTNet, config_from_dict, config_to_dict

MAGIC = b"PPTNET1"


def atomic_write_bytes(path, payload):
    """Write via a temp file in the same directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(model, path, stats=None, extra=None):
    """Serialize config, parameters, and optional stats to ``path``."""
    manifest = []
    blobs = []
    offset = 0
    for name, array in model.state_arrays().items():
        blob = np.ascontiguousarray(array, dtype="<f8").tobytes()
        manifest.append({"name": name, "shape": list(array.shape), "offset": offset})
        blobs.append(blob)
        offset += len(blob)
    header = {
        "config": config_to_dict(model.config),
        "seed": model.seed,
        "params": manifest,
    }
    if stats is not None:
        header["stats"] = stats
    if extra is not None:
        header["extra"] = extra
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = (
        MAGIC
        + struct.pack("<I", len(header_bytes))
        + header_bytes
        + b"".join(blobs)
    )
    atomic_write_bytes(path, payload)


def load_checkpoint(path):
    """Rebuild the model; returns (model, header dict)."""
    with open(path, "rb") as handle:
        raw = handle.read()
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: bad magic; not a checkpoint file")
    pos = len(MAGIC)
    (header_len,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    try:
        header = json.loads(raw[pos:pos + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from exc
    pos += header_len
    body = raw[pos:]
    config = config_from_dict(header["config"])
    model = PPTNet(config, seed=header.get("seed", 0))
    state = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        end = start + 8 * count
        if end > len(body):
            raise CheckpointError(f"{path}: truncated parameter data")
        state[entry["name"]] = np.frombuffer(
            body[start:end], dtype="<f8"
        ).reshape(shape).copy()
    model.load_state_arrays(state)
    return model, header
