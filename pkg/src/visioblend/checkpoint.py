"""Checkpoint container: one file holding named float32 arrays plus metadata.

Layout: an 8-byte little-endian unsigned header length, a UTF-8 JSON header,
then a raw little-endian float32 payload.  The header maps each parameter
name to {dtype, shape, offset, length} (offsets into the payload, lengths in
bytes) and additionally carries "config", "format_version" and, for trainer
checkpoints, the "ema", "opt" and "train_meta" sections.  Round-trips are
bit-exact.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

FORMAT_VERSION = 1
RESERVED_KEYS = {"format_version", "config", "ema", "opt", "train_meta"}


class CheckpointError(Exception):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    def __init__(self, name: str, expected, got):
        super().__init__(f"shape mismatch for parameter '{name}': expected {expected}, got {got}")
        self.name = name


@dataclass
class CheckpointData:
    params: dict[str, np.ndarray]
    config: dict
    ema: Optional[dict[str, np.ndarray]] = None
    opt: Optional[dict[str, np.ndarray]] = None
    train_meta: Optional[dict] = None


def _as_f32(name: str, arr) -> np.ndarray:
    a = np.ascontiguousarray(arr, dtype=np.float32)
    if not np.isfinite(a).all():
        raise CheckpointError(f"parameter '{name}' contains non-finite values")
    return a


def write_checkpoint(
    path,
    params: dict[str, np.ndarray],
    config: dict,
    ema: Optional[dict[str, np.ndarray]] = None,
    opt: Optional[dict[str, np.ndarray]] = None,
    train_meta: Optional[dict] = None,
) -> None:
    """Write atomically (temp file + rename)."""
    bad = RESERVED_KEYS.intersection(params)
    if bad:
        raise CheckpointError(f"parameter names collide with reserved keys: {sorted(bad)}")

    header: dict = {"format_version": FORMAT_VERSION, "config": config}
    chunks: list[bytes] = []
    offset = 0

    def add(section: Optional[dict], arrays: dict[str, np.ndarray]) -> dict:
        nonlocal offset
        records = {}
        for name in sorted(arrays):
            a = _as_f32(name, arrays[name])
            raw = a.astype("<f4", copy=False).tobytes()
            records[name] = {"dtype": "f32", "shape": list(a.shape), "offset": offset, "length": len(raw)}
            chunks.append(raw)
            offset += len(raw)
        return records

    header.update(add(None, params))
    if ema is not None:
        header["ema"] = add(None, ema)
    if opt is not None:
        header["opt"] = add(None, opt)
    if train_meta is not None:
        header["train_meta"] = train_meta

    header_bytes = json.dumps(header).encode("utf-8")
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(struct.pack("<Q", len(header_bytes)))
        f.write(header_bytes)
        for raw in chunks:
            f.write(raw)
    os.replace(tmp, path)


def _read_section(records: dict, payload: bytes) -> dict[str, np.ndarray]:
    out = {}
    for name, rec in records.items():
        if rec.get("dtype") != "f32":
            raise CheckpointError(f"unsupported dtype {rec.get('dtype')!r} for parameter '{name}'")
        off, length = rec["offset"], rec["length"]
        if off + length > len(payload):
            raise CheckpointTruncatedError(
                f"payload too short for parameter '{name}' (need {off + length} bytes, have {len(payload)})"
            )
        arr = np.frombuffer(payload, dtype="<f4", count=length // 4, offset=off)
        out[name] = arr.reshape(rec["shape"]).astype(np.float32)
    return out


def read_checkpoint(path) -> CheckpointData:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 8:
        raise CheckpointTruncatedError("file shorter than the 8-byte header-length field")
    (hlen,) = struct.unpack("<Q", data[:8])
    if len(data) < 8 + hlen:
        raise CheckpointTruncatedError(f"file truncated inside header (expected {hlen} header bytes)")
    try:
        header = json.loads(data[8 : 8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"malformed checkpoint header: {e}") from e
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"unsupported format_version {version!r} (expected {FORMAT_VERSION})")
    payload = data[8 + hlen :]

    param_records = {k: v for k, v in header.items() if k not in RESERVED_KEYS}
    return CheckpointData(
        params=_read_section(param_records, payload),
        config=header.get("config", {}),
        ema=_read_section(header["ema"], payload) if "ema" in header else None,
        opt=_read_section(header["opt"], payload) if "opt" in header else None,
        train_meta=header.get("train_meta"),
    )


def check_shapes(loaded: dict[str, np.ndarray], expected: dict[str, tuple], what: str = "params") -> None:
    """Raise CheckpointShapeError naming the first offending parameter (sorted order)."""
    for name in sorted(set(loaded) | set(expected)):
        if name not in loaded:
            raise CheckpointShapeError(name, tuple(expected[name]), "missing")
        if name not in expected:
            raise CheckpointShapeError(name, "absent from model", tuple(loaded[name].shape))
        if tuple(loaded[name].shape) != tuple(expected[name]):
            raise CheckpointShapeError(name, tuple(expected[name]), tuple(loaded[name].shape))
