"""Single-file parameter checkpoints.

Layout::

    b"HSPLATCK"                      8-byte magic
    uint32 little-endian             format version
    uint64 little-endian             manifest length in bytes
    manifest                         UTF-8 JSON, sorted keys, no whitespace
    payload                          little-endian raw elements, concatenated

The manifest holds the embedded config text plus one entry per tensor
(name, shape, dtype, offset, nbytes) in lexicographic name order. Offsets
are relative to the start of the payload.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .optim import ParamStore

MAGIC = b"HSPLATCK"
FORMAT_VERSION = 1

_DTYPES = {"float32": "<f4", "float64": "<f8"}


class CheckpointError(RuntimeError):
    pass


def encode(arrays: dict[str, np.ndarray], config_text: str = "") -> bytes:
    entries, chunks, offset = [], [], 0
    for name in sorted(arrays):
        arr = np.asarray(arrays[name])
        kind = arr.dtype.name
        if kind not in _DTYPES:
            raise CheckpointError(f"tensor {name!r}: unsupported dtype {kind}")
        raw = np.ascontiguousarray(arr, dtype=_DTYPES[kind]).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": kind,
                        "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    manifest = json.dumps({"config": config_text, "tensors": entries},
                          sort_keys=True, separators=(",", ":")).encode("utf-8")
    header = MAGIC + struct.pack("<IQ", FORMAT_VERSION, len(manifest))
    return header + manifest + b"".join(chunks)


def decode(blob: bytes) -> tuple[dict[str, np.ndarray], str]:
    if blob[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version, mlen = struct.unpack("<IQ", blob[8:20])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint format version {version} is not supported (reader version {FORMAT_VERSION})")
    manifest = json.loads(blob[20:20 + mlen].decode("utf-8"))
    payload = memoryview(blob)[20 + mlen:]
    arrays = {}
    for e in manifest["tensors"]:
        raw = payload[e["offset"]:e["offset"] + e["nbytes"]]
        arr = np.frombuffer(raw, dtype=_DTYPES[e["dtype"]]).reshape(e["shape"])
        arrays[e["name"]] = arr.astype(e["dtype"])
    return arrays, manifest["config"]


def save(store: ParamStore, path, config_text: str = "") -> None:
    arrays = {name: p.data for name, p in store.items()}
    Path(path).write_bytes(encode(arrays, config_text))


def read(path) -> tuple[dict[str, np.ndarray], str]:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return decode(blob)


def load_into(store: ParamStore, arrays: dict[str, np.ndarray], optional_prefixes: tuple[str, ...] = ()) -> list[str]:
    """Copy checkpoint arrays into an existing store.

    Store parameters under ``optional_prefixes`` may be absent from the
    checkpoint; they are dropped from the store. Returns the dropped names.
    """
    dropped = []
    for name in list(store):
        if name in arrays:
            store.assign(name, arrays[name])
        elif optional_prefixes and name.startswith(optional_prefixes):
            dropped.append(name)
        else:
            raise CheckpointError(f"checkpoint has no tensor {name!r}")
    for name in dropped:
        store.remove(name)
    extra = sorted(set(arrays) - set(store))
    unexpected = [n for n in extra if not (optional_prefixes and n.startswith(optional_prefixes))]
    if unexpected:
        raise CheckpointError(f"checkpoint tensors not present in the model: {unexpected}")
    return dropped
