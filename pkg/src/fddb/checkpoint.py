"""Checkpoint container: JSON header + raw little-endian arrays.

Layout::

    FDDB-CKPT-1\n
    {header json}\n
    <payload: concatenated C-contiguous arrays>

The header lists every array's name, dtype, shape, byte offset, and size,
plus a free-form ``meta`` dict and a SHA-256 checksum of the payload.
Arrays are stored sorted by name and the header JSON uses sorted keys, so
a load followed by a save reproduces the file byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .exceptions import CheckpointIntegrityError

MAGIC = b"FDDB-CKPT-1"


def _canonical_dtype(arr: np.ndarray) -> np.dtype:
    dt = arr.dtype
    if dt.byteorder == ">":
        dt = dt.newbyteorder("<")
    return dt


def save_container(path: str | Path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    """Write atomically (temp file + rename)."""
    path = Path(path)
    entries = []
    chunks = []
    offset = 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        dt = _canonical_dtype(arr)
        arr = arr.astype(dt, copy=False)
        raw = arr.tobytes()
        entries.append({"name": name, "dtype": dt.str, "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    header = {
        "arrays": entries,
        "meta": meta,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
        "payload_size": len(payload),
    }
    header_json = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    tmp = path.with_name(path.name + ".tmp")
    tmp.parent.mkdir(parents=True, exist_ok=True)
    with open(tmp, "wb") as fh:
        fh.write(MAGIC + b"\n")
        fh.write(header_json + b"\n")
        fh.write(payload)
    os.replace(tmp, path)


def load_container(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read and verify; raises CheckpointIntegrityError on any corruption."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise CheckpointIntegrityError(f"cannot read checkpoint {path}: {exc}") from exc

    magic_end = blob.find(b"\n")
    if magic_end < 0 or blob[:magic_end] != MAGIC:
        raise CheckpointIntegrityError(f"{path}: not a checkpoint container")
    header_end = blob.find(b"\n", magic_end + 1)
    if header_end < 0:
        raise CheckpointIntegrityError(f"{path}: truncated header")
    try:
        header = json.loads(blob[magic_end + 1:header_end].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointIntegrityError(f"{path}: unparsable header: {exc}") from exc

    payload = blob[header_end + 1:]
    expected_size = header.get("payload_size")
    if expected_size != len(payload):
        raise CheckpointIntegrityError(
            f"{path}: payload size {len(payload)} != declared {expected_size}")
    digest = hashlib.sha256(payload).hexdigest()
    if digest != header.get("payload_sha256"):
        raise CheckpointIntegrityError(f"{path}: payload checksum mismatch")

    arrays: dict[str, np.ndarray] = {}
    for entry in header.get("arrays", []):
        start, nbytes = entry["offset"], entry["nbytes"]
        raw = payload[start:start + nbytes]
        arr = np.frombuffer(raw, dtype=np.dtype(entry["dtype"]))
        arrays[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return arrays, header.get("meta", {})
