"""Checkpoint files: a JSON manifest line followed by raw little-endian float64 payloads.

Layout::

    SYNKGC1\\n
    <manifest json, one line>\\n
    <payload bytes, concatenated in manifest order>

The manifest lists ``name``, ``shape``, ``offset`` and ``nbytes`` for every
array plus a free-form ``meta`` object.  Round trips are bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MAGIC = b"SYNKGC1\n"


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries, blobs, offset = [], [], 0
    for name, arr in arrays.items():
        blob = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(np.shape(arr)), "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    manifest = json.dumps({"arrays": entries, "meta": meta or {}}, sort_keys=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(manifest.encode("utf-8") + b"\n")
        for blob in blobs:
            fh.write(blob)
    return path


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise ValueError(f"{path}: not a checkpoint file")
    end = raw.index(b"\n", len(MAGIC))
    manifest = json.loads(raw[len(MAGIC):end].decode("utf-8"))
    payload = raw[end + 1:]
    arrays = {}
    for e in manifest["arrays"]:
        chunk = payload[e["offset"]:e["offset"] + e["nbytes"]]
        arrays[e["name"]] = np.frombuffer(chunk, dtype="<f8").astype(np.float64).reshape(e["shape"])
    return arrays, manifest["meta"]
