"""Little-endian binary container for named float32 tensors.

Layout: magic ``DIPT``, version u32, then for each tensor (sorted by name):
name length u32, UTF-8 name, rank u32, dims u32 * rank, f32 payload in
row-major order. Sorting makes serialization byte-stable.
"""

from __future__ import annotations

import io
import struct

import numpy as np

MAGIC = b"DIPT"
VERSION = 1

__all__ = ["MAGIC", "VERSION", "write_tensors", "read_tensors", "serialized_size"]


def write_tensors(dest, tensors: dict[str, np.ndarray]) -> None:
    """Write ``tensors`` to a path or binary file object."""
    if isinstance(dest, (str, bytes)) or hasattr(dest, "__fspath__"):
        with open(dest, "wb") as fh:
            _write(fh, tensors)
    else:
        _write(dest, tensors)


def _write(fh, tensors: dict[str, np.ndarray]) -> None:
    fh.write(MAGIC)
    fh.write(struct.pack("<I", VERSION))
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        encoded = name.encode("utf-8")
        fh.write(struct.pack("<I", len(encoded)))
        fh.write(encoded)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def read_tensors(src) -> dict[str, np.ndarray]:
    """Read a container from a path or binary file object."""
    if isinstance(src, (str, bytes)) or hasattr(src, "__fspath__"):
        with open(src, "rb") as fh:
            return _read(fh)
    return _read(src)


def _read(fh) -> dict[str, np.ndarray]:
    magic = fh.read(4)
    if magic != MAGIC:
        raise ValueError(f"bad container magic {magic!r}")
    (version,) = struct.unpack("<I", fh.read(4))
    if version != VERSION:
        raise ValueError(f"unsupported container version {version}")
    out: dict[str, np.ndarray] = {}
    while True:
        head = fh.read(4)
        if not head:
            break
        (name_len,) = struct.unpack("<I", head)
        name = fh.read(name_len).decode("utf-8")
        (rank,) = struct.unpack("<I", fh.read(4))
        dims = struct.unpack(f"<{rank}I", fh.read(4 * rank)) if rank else ()
        count = int(np.prod(dims)) if dims else 1
        payload = fh.read(4 * count)
        if len(payload) != 4 * count:
            raise ValueError(f"truncated payload for tensor '{name}'")
        out[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    return out


def serialized_size(tensors: dict[str, np.ndarray]) -> int:
    """Exact byte size of the container holding ``tensors``."""
    buf = io.BytesIO()
    _write(buf, tensors)
    return buf.tell()
