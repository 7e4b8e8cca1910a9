"""Single-file container for named dense float tensors plus a JSON manifest.

Layout: magic ``PTNS`` | format version u32 LE | manifest length u64 LE |
manifest JSON (UTF-8) | payloads. Each payload starts at a 64-byte-aligned
absolute file offset and holds row-major little-endian data. The manifest
lists name/dtype/shape/offset/length per tensor and carries a free-form
``meta`` object (phase, step, lineage, seed, ...).

Writes go to a temp file in the same directory and are renamed into place.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

MAGIC = b"PTNS"
FORMAT_VERSION = 1
ALIGN = 64

_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}
_DTYPE_NAMES = {np.dtype("<f4"): "f32", np.dtype("<f8"): "f64"}


class ContainerError(Exception):
    """Base for all container format errors."""


class BadMagicError(ContainerError):
    pass


class VersionMismatchError(ContainerError):
    pass


class TruncatedPayloadError(ContainerError):
    pass


class ShapeMismatchError(ContainerError):
    pass


class DuplicateNameError(ContainerError):
    pass


@dataclass
class TensorContainer:
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]


def _as_pairs(tensors) -> list[tuple[str, np.ndarray]]:
    if isinstance(tensors, Mapping):
        items: Iterable = tensors.items()
    else:
        items = tensors
    pairs = []
    seen = set()
    for name, arr in items:
        if name in seen:
            raise DuplicateNameError(f"duplicate tensor name {name!r}")
        seen.add(name)
        arr = np.asarray(arr)
        if arr.dtype == np.float32:
            arr = arr.astype("<f4", copy=False)
        elif arr.dtype == np.float64:
            arr = arr.astype("<f8", copy=False)
        else:
            raise ContainerError(
                f"tensor {name!r} has dtype {arr.dtype}; only f32/f64 are stored"
            )
        # ascontiguousarray promotes 0-d to shape (1,); keep the true shape
        pairs.append((name, np.ascontiguousarray(arr).reshape(arr.shape)))
    return pairs


def _align(offset: int) -> int:
    return (offset + ALIGN - 1) // ALIGN * ALIGN


def write_container(path: str | os.PathLike, tensors, meta: dict | None = None) -> None:
    """Write tensors (mapping or (name, array) pairs) and meta to path atomically."""
    pairs = _as_pairs(tensors)
    meta = meta if meta is not None else {}

    def manifest_bytes(offsets: list[int]) -> bytes:
        entries = [
            {
                "name": name,
                "dtype": _DTYPE_NAMES[arr.dtype],
                "shape": list(arr.shape),
                "offset": off,
                "length": arr.nbytes,
            }
            for (name, arr), off in zip(pairs, offsets)
        ]
        doc = {"tensors": entries, "meta": meta}
        return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")

    # Offsets depend on the manifest length and vice versa; iterate to the
    # fixed point (offset digit widths stabilize after a couple of rounds).
    offsets = [0] * len(pairs)
    for _ in range(8):
        blob = manifest_bytes(offsets)
        cursor = _align(len(MAGIC) + 4 + 8 + len(blob))
        new_offsets = []
        for _, arr in pairs:
            new_offsets.append(cursor)
            cursor = _align(cursor + arr.nbytes)
        if new_offsets == offsets:
            break
        offsets = new_offsets
    else:
        raise ContainerError("manifest layout failed to converge")

    blob = manifest_bytes(offsets)
    tmp = f"{os.fspath(path)}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(FORMAT_VERSION.to_bytes(4, "little"))
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        for (name, arr), off in zip(pairs, offsets):
            fh.write(b"\x00" * (off - fh.tell()))
            fh.write(arr.tobytes())
    os.replace(tmp, path)


def read_container(path: str | os.PathLike) -> TensorContainer:
    """Exact inverse of write_container, with validation per error kind."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {data[:4]!r}")
    version = int.from_bytes(data[4:8], "little")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    manifest_len = int.from_bytes(data[8:16], "little")
    if 16 + manifest_len > len(data):
        raise TruncatedPayloadError(f"{path}: manifest extends past end of file")
    try:
        doc = json.loads(data[16 : 16 + manifest_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"{path}: unreadable manifest: {exc}") from exc

    out = TensorContainer(meta=doc.get("meta", {}))
    for entry in doc.get("tensors", []):
        name = entry["name"]
        if name in out.tensors:
            raise DuplicateNameError(f"{path}: duplicate tensor name {name!r}")
        dtype = _DTYPES.get(entry["dtype"])
        if dtype is None:
            raise ContainerError(f"{path}: tensor {name!r} has unknown dtype {entry['dtype']!r}")
        shape = tuple(int(s) for s in entry["shape"])
        length = int(entry["length"])
        expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize if shape else dtype.itemsize * 1
        if len(shape) == 0:
            expected = dtype.itemsize
        if length != expected:
            raise ShapeMismatchError(
                f"{path}: tensor {name!r} length {length} != shape {shape} x {dtype.itemsize}"
            )
        offset = int(entry["offset"])
        if offset + length > len(data):
            raise TruncatedPayloadError(f"{path}: tensor {name!r} payload truncated")
        arr = np.frombuffer(data[offset : offset + length], dtype=dtype).reshape(shape)
        out.tensors[name] = arr.copy()
    return out
