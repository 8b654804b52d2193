"""Binary artifact container: magic, JSON header, little-endian tensor payloads.

Layout::

    b"TRXCAT\\x00\\x00"          8 bytes magic
    uint32 LE                   format version
    uint64 LE                   header length H
    H bytes                     UTF-8 JSON header (sorted keys, compact)
    payload                     tensors, each 8-byte aligned, C order

The header holds ``kind``, free-form ``meta`` and a ``tensors`` table of
``{name, dtype, shape, offset, nbytes}`` with offsets relative to the start
of the payload. Writing is deterministic: equal inputs give equal bytes.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import DataError

MAGIC = b"TRXCAT\x00\x00"
FORMAT_VERSION = 1
_DTYPES = {"f4": "<f4", "f8": "<f8", "i4": "<i4", "i8": "<i8", "u1": "u1"}


def _code(arr: np.ndarray) -> str:
    for code, spec in _DTYPES.items():
        if arr.dtype == np.dtype(spec):
            return code
    raise TypeError(f"unsupported tensor dtype {arr.dtype}")


def dumps(kind: str, meta: Mapping, tensors: Mapping[str, np.ndarray] | None = None) -> bytes:
    table, chunks, offset = [], [], 0
    for name in sorted(tensors or {}):
        arr = np.asarray(tensors[name])
        if arr.dtype.kind == "f":
            arr = arr.astype("<f4" if arr.dtype.itemsize == 4 else "<f8", copy=False)
        elif arr.dtype.kind in "iu" and arr.dtype != np.uint8:
            arr = arr.astype("<i4" if arr.dtype.itemsize <= 4 and arr.dtype.kind == "i" else "<i8", copy=False)
        elif arr.dtype == np.bool_:
            arr = arr.astype("u1")
        raw = np.ascontiguousarray(arr).tobytes()
        table.append({"name": name, "dtype": _code(arr), "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        pad = (-len(raw)) % 8
        chunks.append(raw + b"\x00" * pad)
        offset += len(raw) + pad
    header = json.dumps({"kind": kind, "meta": meta, "tensors": table}, sort_keys=True,
                        separators=(",", ":"), ensure_ascii=False, allow_nan=False).encode("utf-8")
    return MAGIC + struct.pack("<IQ", FORMAT_VERSION, len(header)) + header + b"".join(chunks)


def loads(blob: bytes, expect_kind: str | None = None) -> tuple[str, dict, dict[str, np.ndarray]]:
    if len(blob) < 20 or blob[:8] != MAGIC:
        raise DataError("not a trxcat artifact (bad magic)")
    version, hlen = struct.unpack("<IQ", blob[8:20])
    if version != FORMAT_VERSION:
        raise DataError(f"unsupported artifact format version {version}")
    try:
        header = json.loads(blob[20:20 + hlen].decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise DataError(f"corrupt artifact header: {exc}") from None
    kind = header["kind"]
    if expect_kind is not None and kind != expect_kind:
        raise DataError(f"expected a {expect_kind!r} artifact, found {kind!r}")
    base = 20 + hlen
    tensors = {}
    for t in header["tensors"]:
        start = base + t["offset"]
        if start + t["nbytes"] > len(blob):
            raise DataError(f"artifact truncated in tensor {t['name']!r}")
        arr = np.frombuffer(blob, dtype=_DTYPES[t["dtype"]], count=t["nbytes"] // np.dtype(_DTYPES[t["dtype"]]).itemsize,
                            offset=start)
        tensors[t["name"]] = arr.reshape(t["shape"]).astype(arr.dtype.newbyteorder("="), copy=True)
    return kind, header["meta"], tensors


def write(path, kind: str, meta: Mapping, tensors: Mapping[str, np.ndarray] | None = None) -> bytes:
    blob = dumps(kind, meta, tensors)
    Path(path).write_bytes(blob)
    return blob


def read(path, expect_kind: str | None = None):
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read artifact {path}: {exc}") from None
    return loads(blob, expect_kind)


def digest(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()
