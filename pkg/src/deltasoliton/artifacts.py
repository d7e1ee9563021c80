"""Artifact serialization: bit-stable CSV, JSON reports, and the binary
checkpoint format.

CSV files use '.' decimals, ',' separators, LF line endings, and 17
significant digits, and carry the config hash in a leading comment line.
Checkpoints are 'DSOL' + u32 version + grid metadata + interleaved
little-endian float64 re/im pairs.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct

import numpy as np

from .grid import Grid, GridFunction

CHECKPOINT_MAGIC = b"DSOL"
CHECKPOINT_VERSION = 1


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def config_hash(config_obj) -> str:
    return hashlib.sha256(canonical_json(config_obj).encode("utf-8")).hexdigest()


def format_value(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    xf = float(x)
    if math.isnan(xf):
        return "nan"
    return f"{xf:.17g}"


def render_csv(columns: list[str], rows: list[list], cfg_hash: str) -> str:
    lines = [f"# config_sha256={cfg_hash}", ",".join(columns)]
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    return "\n".join(lines) + "\n"


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON-serializable: {type(obj)}")


def render_json(payload: dict, cfg_hash: str) -> str:
    out = {"config_sha256": cfg_hash, **payload}
    return json.dumps(out, indent=2, sort_keys=True, allow_nan=True,
                      default=_json_default) + "\n"


def checkpoint_bytes(u: GridFunction, t: float) -> bytes:
    head = CHECKPOINT_MAGIC + struct.pack(
        "<IIdd",
        CHECKPOINT_VERSION,
        u.grid.n_points,
        u.grid.half_length,
        t,
    )
    inter = np.empty(2 * u.grid.n_points, dtype="<f8")
    inter[0::2] = u.values.real
    inter[1::2] = u.values.imag
    return head + inter.tobytes()


def read_checkpoint(data: bytes) -> tuple[GridFunction, float]:
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError("not a checkpoint: bad magic")
    version, n_points, half_length, t = struct.unpack("<IIdd", data[4 : 4 + 24])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    body = np.frombuffer(data[4 + 24 :], dtype="<f8")
    if len(body) != 2 * n_points:
        raise ValueError("truncated checkpoint payload")
    vals = body[0::2] + 1j * body[1::2]
    return GridFunction(Grid(half_length, n_points), vals), t
