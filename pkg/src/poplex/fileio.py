"""Binary artifact container and fingerprint helpers.

Every binary artifact (corpus, embeddings, alignments, grids, partitions,
whitening transforms) shares one layout: an 8-byte magic string, a u32
length-prefixed JSON metadata block, then raw little-endian arrays in the
order declared by the metadata's "arrays" entry.  Writers are atomic
(temp file + rename) so a failed stage never leaves a truncated artifact.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from typing import Any

import numpy as np

from .errors import FormatError

_LEN = struct.Struct("<I")


def dumps_canonical(obj: Any) -> str:
    """JSON with sorted keys and no whitespace churn; reproducible byte-wise."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def atomic_write_bytes(path: str, data: bytes) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_blob(path: str, magic: bytes, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    """Write a binary artifact. `meta` must be JSON-serializable."""
    if len(magic) != 8:
        raise ValueError("magic must be exactly 8 bytes")
    meta = dict(meta)
    meta["arrays"] = [
        {"name": name, "dtype": str(a.dtype), "shape": list(a.shape)}
        for name, a in arrays.items()
    ]
    meta_bytes = dumps_canonical(meta).encode("utf-8")
    parts = [magic, _LEN.pack(len(meta_bytes)), meta_bytes]
    for a in arrays.values():
        parts.append(np.ascontiguousarray(a).tobytes())
    atomic_write_bytes(path, b"".join(parts))


def read_blob(path: str, magic: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    """Read an artifact written by write_blob, validating the magic string."""
    with open(path, "rb") as f:
        got = f.read(8)
        if got != magic:
            raise FormatError(
                f"{path}: bad magic {got!r}, expected {magic!r}"
            )
        (meta_len,) = _LEN.unpack(f.read(4))
        try:
            meta = json.loads(f.read(meta_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatError(f"{path}: corrupt metadata block: {e}") from e
        arrays = {}
        for spec in meta.pop("arrays", []):
            dtype = np.dtype(spec["dtype"])
            shape = tuple(spec["shape"])
            n = int(np.prod(shape)) if shape else 1
            buf = f.read(n * dtype.itemsize)
            if len(buf) != n * dtype.itemsize:
                raise FormatError(f"{path}: truncated array {spec['name']!r}")
            arrays[spec["name"]] = np.frombuffer(buf, dtype=dtype).reshape(shape).copy()
    return meta, arrays


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def content_fingerprint(meta: dict, arrays: dict[str, np.ndarray]) -> str:
    """Stable fingerprint of in-memory content (order-insensitive on keys)."""
    h = hashlib.sha256()
    h.update(dumps_canonical(meta).encode("utf-8"))
    for name in sorted(arrays):
        h.update(name.encode("utf-8"))
        h.update(np.ascontiguousarray(arrays[name]).tobytes())
    return h.hexdigest()
