"""Binary checkpoint: JSON header plus length-prefixed little-endian float64 arrays.

Layout::

    b"ARCK"  u8 version  u32 header_len  header (UTF-8 JSON)
    u32 array_count
    per array: u16 name_len, name, u8 ndim, u32 dims..., float64 data
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"ARCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    header: dict
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Checkpoint):
            return NotImplemented
        return (self.header == other.header and self.arrays.keys() == other.arrays.keys()
                and all(np.array_equal(self.arrays[k], other.arrays[k]) for k in self.arrays))


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    head = json.dumps(ckpt.header, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<BI", VERSION, len(head)), head, struct.pack("<I", len(ckpt.arrays))]
    for name, arr in ckpt.arrays.items():
        arr = np.asarray(arr, dtype="<f8")
        key = name.encode()
        parts.append(struct.pack("<H", len(key)) + key + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(b"".join(parts))
    tmp.replace(path)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError("truncated checkpoint")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path) -> Checkpoint:
    r = _Reader(Path(path).read_bytes())
    if r.take(4) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, head_len = r.unpack("<BI")
    if version != VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version}, expected {VERSION}")
    header = json.loads(r.take(head_len).decode())
    (count,) = r.unpack("<I")
    arrays = {}
    for _ in range(count):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode()
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I") if ndim else ()
        size = int(np.prod(shape)) if ndim else 1
        arrays[name] = np.frombuffer(r.take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
    if r.pos != len(r.buf):
        raise CheckpointError(f"{path}: trailing bytes after last array")
    return Checkpoint(header, arrays)
