"""
FVCK binary checkpoint format.

Layout (little-endian):
    b"FVCK" | version u32 | entry count u32
    per entry: name length u32 | UTF-8 name | rank u32 | extents u64 * rank | values f32

Run metadata (config, seed, provider tag, plans) is JSON stored as UTF-8 bytes
in an f32 entry named ``__meta__``.
"""

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from ..exceptions import CheckpointError

logger = logging.getLogger(__name__)

MAGIC = b'FVCK'
VERSION = 1
META_ENTRY = '__meta__'


def encode_text(text: str) -> np.ndarray:
    """UTF-8 bytes as an f32 array (one value per byte)."""
    return np.frombuffer(text.encode('utf-8'), dtype=np.uint8).astype(np.float32)


def decode_text(values: np.ndarray) -> str:
    return np.asarray(values).astype(np.uint8).tobytes().decode('utf-8')


def write_entries(path: Union[str, Path], entries: Dict[str, np.ndarray]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'wb') as f:
            f.write(MAGIC)
            f.write(struct.pack('<II', VERSION, len(entries)))
            for name, value in entries.items():
                arr = np.asarray(value, dtype='<f4')
                raw = name.encode('utf-8')
                f.write(struct.pack('<I', len(raw)))
                f.write(raw)
                f.write(struct.pack('<I', arr.ndim))
                f.write(struct.pack(f'<{arr.ndim}Q', *arr.shape))
                f.write(np.ascontiguousarray(arr).tobytes())
    except OSError as e:
        raise CheckpointError(f"cannot write {path}: {e}", details={'path': str(path)}) from e
    logger.debug("Wrote %d entries to %s", len(entries), path)
    return path


class _Reader:
    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, size: int) -> bytes:
        if self.pos + size > len(self.data):
            raise CheckpointError(f"truncated checkpoint {self.path}", details={'offset': self.pos})
        chunk = self.data[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def u32(self) -> int:
        return struct.unpack('<I', self.take(4))[0]


def read_entries(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read {path}: {e}", details={'path': str(path)}) from e

    reader = _Reader(data, path)
    if reader.take(4) != MAGIC:
        raise CheckpointError(f"{path} is not an FVCK file")
    version = reader.u32()
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}", details={'path': str(path)})

    entries: Dict[str, np.ndarray] = {}
    for _ in range(reader.u32()):
        name = reader.take(reader.u32()).decode('utf-8')
        rank = reader.u32()
        shape = struct.unpack(f'<{rank}Q', reader.take(8 * rank))
        count = int(np.prod(shape)) if rank else 1
        entries[name] = np.frombuffer(reader.take(4 * count), dtype='<f4').reshape(shape).copy()
    if reader.pos != len(data):
        raise CheckpointError(f"trailing bytes in {path}", details={'offset': reader.pos})
    return entries


@dataclass
class Checkpoint:
    """Named parameter arrays plus JSON-serializable run metadata."""

    tensors: Dict[str, np.ndarray]
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return self.meta.get('kind', '')

    @property
    def provider(self) -> str:
        return self.meta.get('provider', '')

    def save(self, path: Union[str, Path]) -> Path:
        if META_ENTRY in self.tensors:
            raise CheckpointError(f"tensor name {META_ENTRY} is reserved")
        entries = dict(self.tensors)
        entries[META_ENTRY] = encode_text(json.dumps(self.meta, sort_keys=True))
        return write_entries(path, entries)

    @classmethod
    def load(cls, path: Union[str, Path], kind: str = None) -> 'Checkpoint':
        entries = read_entries(path)
        meta_raw = entries.pop(META_ENTRY, None)
        meta = json.loads(decode_text(meta_raw)) if meta_raw is not None else {}
        ckpt = cls(entries, meta)
        if kind is not None and ckpt.kind != kind:
            raise CheckpointError(
                f"expected a {kind} checkpoint, found {ckpt.kind or 'untyped'}",
                details={'path': str(path)},
            )
        return ckpt
