"""Versioned binary container used by every on-disk model artifact.

Layout: magic, format version, artifact kind, a JSON metadata header and a
sequence of named numpy blocks stored as raw C-order bytes. Reads are exact:
arrays round-trip bit-for-bit, metadata round-trips through JSON (Python
serializes floats with shortest round-trip repr).
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any, Mapping

import numpy as np

_MAGIC = b"CMAF"
FORMAT_VERSION = 1


class ArtifactError(ValueError):
    """Raised on a corrupt, truncated or mismatched artifact file."""


def write_artifact(
    path: str | Path,
    kind: str,
    meta: Mapping[str, Any],
    arrays: Mapping[str, np.ndarray] | None = None,
) -> None:
    arrays = arrays or {}
    meta_blob = json.dumps(meta, sort_keys=True, ensure_ascii=False).encode("utf-8")
    kind_blob = kind.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<H", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(kind_blob)))
        fh.write(kind_blob)
        fh.write(struct.pack("<I", len(meta_blob)))
        fh.write(meta_blob)
        fh.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr)
            name_blob = name.encode("utf-8")
            dtype_blob = arr.dtype.str.encode("ascii")
            fh.write(struct.pack("<I", len(name_blob)))
            fh.write(name_blob)
            fh.write(struct.pack("<I", len(dtype_blob)))
            fh.write(dtype_blob)
            fh.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<q", dim))
            raw = arr.tobytes()
            fh.write(struct.pack("<Q", len(raw)))
            fh.write(raw)


def _read_exact(fh, n: int, what: str) -> bytes:
    blob = fh.read(n)
    if len(blob) != n:
        raise ArtifactError(f"truncated artifact while reading {what}")
    return blob


def read_artifact(
    path: str | Path, expected_kind: str | None = None
) -> tuple[str, dict[str, Any], dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != _MAGIC:
            raise ArtifactError(f"{path}: not a clickmatch artifact")
        (version,) = struct.unpack("<H", _read_exact(fh, 2, "version"))
        if version != FORMAT_VERSION:
            raise ArtifactError(f"{path}: unsupported artifact version {version}")
        (kind_len,) = struct.unpack("<I", _read_exact(fh, 4, "kind length"))
        kind = _read_exact(fh, kind_len, "kind").decode("utf-8")
        if expected_kind is not None and kind != expected_kind:
            raise ArtifactError(f"{path}: expected {expected_kind!r} artifact, found {kind!r}")
        (meta_len,) = struct.unpack("<I", _read_exact(fh, 4, "meta length"))
        meta = json.loads(_read_exact(fh, meta_len, "meta").decode("utf-8"))
        (n_arrays,) = struct.unpack("<I", _read_exact(fh, 4, "array count"))
        arrays: dict[str, np.ndarray] = {}
        for _ in range(n_arrays):
            (name_len,) = struct.unpack("<I", _read_exact(fh, 4, "array name length"))
            name = _read_exact(fh, name_len, "array name").decode("utf-8")
            (dtype_len,) = struct.unpack("<I", _read_exact(fh, 4, "dtype length"))
            dtype = np.dtype(_read_exact(fh, dtype_len, "dtype").decode("ascii"))
            (ndim,) = struct.unpack("<B", _read_exact(fh, 1, "ndim"))
            shape = tuple(
                struct.unpack("<q", _read_exact(fh, 8, "shape"))[0] for _ in range(ndim)
            )
            (nbytes,) = struct.unpack("<Q", _read_exact(fh, 8, "array size"))
            raw = _read_exact(fh, nbytes, f"array {name!r}")
            arrays[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
    return kind, meta, arrays
