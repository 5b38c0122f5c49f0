"""Fixed-size dentry encoding, filename hashing, and the append-only name heap.

A dentry is exactly 24 bytes: (hash_key, inode_no, name_ptr), each a
little-endian u64. ``name_ptr`` addresses a NameRecord in the region's
shared heap: a u16 byte length followed by the raw name bytes, padded to
the next 8-byte boundary. Records are immutable once written.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import CorruptRecord, EmptyName, NameTooLong
from .pm import SB_BUMP, PmRegion

DENTRY_SIZE = 24
MAX_NAME = 255

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

_DENTRY = struct.Struct("<QQQ")
_U16 = struct.Struct("<H")


def _as_bytes(name: str | bytes) -> bytes:
    return name.encode("utf-8") if isinstance(name, str) else bytes(name)


def hash_name(name: str | bytes) -> int:
    """64-bit FNV-1a digest of the filename bytes."""
    data = _as_bytes(name)
    if len(data) == 0:
        raise EmptyName("empty filename")
    if len(data) > MAX_NAME:
        raise NameTooLong(f"{len(data)} bytes exceeds {MAX_NAME}")
    h = FNV_OFFSET
    for b in data:
        h = ((h ^ b) * FNV_PRIME) & _MASK64
    return h


@dataclass(frozen=True)
class Dentry:
    hash_key: int
    inode_no: int
    name_ptr: int

    def pack(self) -> bytes:
        return _DENTRY.pack(self.hash_key, self.inode_no, self.name_ptr)

    @classmethod
    def unpack(cls, data: bytes | memoryview, offset: int = 0) -> "Dentry":
        return cls(*_DENTRY.unpack_from(data, offset))


def append_name(region: PmRegion, name: str | bytes) -> int:
    """Write a NameRecord to the heap, persist it, and return its offset."""
    data = _as_bytes(name)
    if len(data) == 0:
        raise EmptyName("empty filename")
    if len(data) > MAX_NAME:
        raise NameTooLong(f"{len(data)} bytes exceeds {MAX_NAME}")
    off = region.alloc_name_bytes(2 + len(data))
    region.write_bytes(off, _U16.pack(len(data)) + data)
    region.persist_barrier()
    return off


def read_name(region: PmRegion, offset: int) -> bytes:
    """Read back the exact bytes of a previously appended NameRecord."""
    heap_end = region.read_u64(SB_BUMP)  # current bump pointer bounds the heap
    if offset < 0 or offset + 2 > heap_end:
        raise CorruptRecord(f"name record offset {offset} past heap end")
    (length,) = _U16.unpack_from(region.buf, offset)
    if length == 0 or length > MAX_NAME or offset + 2 + length > heap_end:
        raise CorruptRecord(f"bad name record at {offset}: length {length}")
    return bytes(region.buf[offset + 2:offset + 2 + length])
