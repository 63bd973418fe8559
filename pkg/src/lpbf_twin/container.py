"""Self-describing binary container shared by snapshots, sections and models.

Layout::

    8 bytes   magic b"LPBFTWIN"
    u32 LE    format version
    u64 LE    header length in bytes
    header    UTF-8 JSON: kind, metadata, array table (name, dtype, shape, offset)
    payload   arrays, little-endian, row-major, in table order
    32 bytes  SHA-256 of header + payload
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"LPBFTWIN"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


class ContainerError(ValueError):
    pass


class VersionMismatchError(ContainerError):
    pass


class ChecksumError(ContainerError):
    pass


class TruncatedFileError(ContainerError):
    pass


def _le_dtype(a: np.ndarray) -> np.dtype:
    return a.dtype.newbyteorder("<") if a.dtype.byteorder not in ("<", "|") else a.dtype


def write_container(path, kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> Path:
    path = Path(path)
    table = []
    chunks = []
    offset = 0
    for name, a in arrays.items():
        a = np.ascontiguousarray(a)
        a = a.astype(_le_dtype(a), copy=False)
        raw = a.tobytes(order="C")
        table.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape),
                      "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps({"kind": kind, "meta": meta, "arrays": table},
                        sort_keys=True).encode("utf-8")
    payload = b"".join(chunks)
    digest = hashlib.sha256(header + payload).digest()
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, FORMAT_VERSION, len(header)))
        fh.write(header)
        fh.write(payload)
        fh.write(digest)
    tmp.replace(path)
    return path


def _read_prefix(fh, path):
    raw = fh.read(_PREFIX.size)
    if len(raw) < _PREFIX.size:
        raise TruncatedFileError(f"{path}: file shorter than container prefix")
    magic, version, hlen = _PREFIX.unpack(raw)
    if magic != MAGIC:
        raise ContainerError(f"{path}: not a container (bad magic)")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    hraw = fh.read(hlen)
    if len(hraw) < hlen:
        raise TruncatedFileError(f"{path}: truncated header")
    return hraw


def read_header(path) -> dict:
    """Parse only the JSON header; array data is never read."""
    with open(path, "rb") as fh:
        hraw = _read_prefix(fh, path)
    try:
        return json.loads(hraw)
    except json.JSONDecodeError as exc:
        raise ContainerError(f"{path}: corrupt header") from exc


def read_container(path, kind: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        hraw = _read_prefix(fh, path)
        rest = fh.read()
    if len(rest) < 32:
        raise TruncatedFileError(f"{path}: missing checksum")
    payload, digest = rest[:-32], rest[-32:]
    if hashlib.sha256(hraw + payload).digest() != digest:
        raise ChecksumError(f"{path}: checksum mismatch")
    header = json.loads(hraw)
    if kind is not None and header["kind"] != kind:
        raise ContainerError(f"{path}: expected {kind!r}, found {header['kind']!r}")
    arrays = {}
    for entry in header["arrays"]:
        start, n = entry["offset"], entry["nbytes"]
        if start + n > len(payload):
            raise TruncatedFileError(f"{path}: array {entry['name']} truncated")
        dt = np.dtype(entry["dtype"])
        a = np.frombuffer(payload, dtype=dt, count=n // dt.itemsize, offset=start)
        arrays[entry["name"]] = a.reshape(entry["shape"]).copy()
    return header, arrays
