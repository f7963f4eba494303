"""On-disk checkpoint blobs.

Layout: one line of canonical JSON (sorted keys, no whitespace) describing the
schema version, free-form metadata, and an ordered array manifest; then a
newline; then each array's raw little-endian bytes concatenated in manifest
order. Reading back yields bit-identical arrays, so writing the same state
twice produces byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1

_DTYPES = {"<f8": np.dtype("<f8"), "<i8": np.dtype("<i8")}


class CheckpointError(RuntimeError):
    pass


def _canonical_dtype(arr: np.ndarray) -> str:
    if arr.dtype.kind == "f":
        return "<f8"
    if arr.dtype.kind in "iu":
        return "<i8"
    raise CheckpointError(f"unsupported array dtype: {arr.dtype}")


def write_blob(path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    """`arrays` is written in sorted-name order; meta must be JSON-safe."""
    manifest = []
    payloads = []
    for name in sorted(arrays):
        arr = np.asarray(arrays[name])
        code = _canonical_dtype(arr)
        arr = np.ascontiguousarray(arr.astype(_DTYPES[code], copy=False))
        manifest.append({"dtype": code, "name": name, "shape": list(arr.shape)})
        payloads.append(arr.tobytes())
    header = {"arrays": manifest, "meta": meta, "schema": SCHEMA_VERSION}
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(header_bytes)
        fh.write(b"\n")
        for blob in payloads:
            fh.write(blob)


def read_blob(path):
    """Returns (meta, arrays). Raises CheckpointError on any malformation."""
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise CheckpointError("missing header line")
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise CheckpointError(f"bad header: {err}") from err
    if header.get("schema") != SCHEMA_VERSION:
        raise CheckpointError(
            f"schema version mismatch: file has {header.get('schema')!r}, "
            f"reader supports {SCHEMA_VERSION}"
        )
    arrays: dict[str, np.ndarray] = {}
    offset = nl + 1
    for entry in header["arrays"]:
        dtype = _DTYPES.get(entry["dtype"])
        if dtype is None:
            raise CheckpointError(f"unsupported dtype in manifest: {entry['dtype']}")
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * dtype.itemsize
        chunk = raw[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"truncated payload for array {entry['name']}")
        arrays[entry["name"]] = np.frombuffer(chunk, dtype=dtype).reshape(shape).copy()
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError("trailing bytes after last array")
    return header["meta"], arrays
