"""Simulated byte-addressable persistent memory.

A ``PmRegion`` is a flat bytearray with instrumented writes, an atomic
8-byte write primitive, persist barriers, and crash-snapshot capture.
The crash model is deliberately simple and exhaustively testable:
crashes occur only at persist-barrier boundaries, so every write issued
before a barrier is durable in any snapshot taken at or after it, and
writes never appear torn.

The region also carries a tiny persistent allocator in its superblock
(bytes 0..4095): a bump pointer shared by 4096-byte-aligned block
allocations and 8-byte-aligned name/heap allocations, plus a LIFO free
list for blocks threaded through the first word of each free block.

Superblock word layout (all little-endian u64):
    0   magic "CIBREGN1"
    8   bump pointer (next unallocated byte, starts at 4096)
    16  free-list head (0 = empty)
    24  root directory inode offset (0 = none)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .errors import (
    MisalignedAtomic,
    OutOfBounds,
    OutOfSpace,
    SimulatedCrash,
)

BLOCK_SIZE = 4096
WORD = 8
DEFAULT_CAPACITY = 1 << 30

MAGIC = b"CIBREGN1"
SB_MAGIC = 0
SB_BUMP = 8
SB_FREE_HEAD = 16
SB_ROOT_DIR = 24

_U64 = struct.Struct("<Q")


@dataclass
class WriteStats:
    """Monotonic counters of PM write traffic."""

    bytes_written: int = 0
    words_written: int = 0
    barriers: int = 0

    def snapshot(self) -> "WriteStats":
        return WriteStats(self.bytes_written, self.words_written, self.barriers)

    def delta(self, since: "WriteStats") -> "WriteStats":
        return WriteStats(
            self.bytes_written - since.bytes_written,
            self.words_written - since.words_written,
            self.barriers - since.barriers,
        )


def words_touched(offset: int, length: int) -> int:
    """Distinct 8-byte-aligned words overlapped by [offset, offset+length)."""
    if length <= 0:
        return 0
    first = offset // WORD
    last = (offset + length - 1) // WORD
    return last - first + 1


@dataclass
class CrashPlan:
    """Designates barrier indices for snapshot capture and crash injection.

    ``crash_at`` names the barrier (1-based, counted by ``stats.barriers``)
    at which a snapshot is recorded and ``SimulatedCrash`` is raised.
    ``snapshot_at`` barriers record a snapshot without crashing.
    """

    crash_at: int | None = None
    snapshot_at: frozenset[int] = field(default_factory=frozenset)


class PmRegion:
    """Instrumented persistent-memory region with its own allocator."""

    def __init__(self, capacity: int = DEFAULT_CAPACITY, *, record_writes: bool = False,
                 _format: bool = True):
        if capacity < 2 * BLOCK_SIZE:
            raise ValueError("capacity too small for superblock plus one block")
        self.capacity = capacity
        self.buf = bytearray(capacity)
        self.stats = WriteStats()
        self.crash_plan: CrashPlan | None = None
        self.snapshots: list[tuple[int, bytes]] = []
        self.record_writes = record_writes
        # ("w", offset, data) and ("b", barrier index, b"") events, in order
        self.write_log: list[tuple[str, int, bytes]] = []
        if _format:
            self._format()

    def _format(self) -> None:
        self.write_bytes(SB_MAGIC, MAGIC)
        self.write_atomic64(SB_BUMP, BLOCK_SIZE)
        self.write_atomic64(SB_FREE_HEAD, 0)
        self.write_atomic64(SB_ROOT_DIR, 0)
        self.persist_barrier()

    # -- raw access -------------------------------------------------------

    def _check_range(self, offset: int, length: int) -> None:
        if offset < 0 or length < 0 or offset + length > self.capacity:
            raise OutOfBounds(f"range [{offset}, {offset + length}) exceeds capacity {self.capacity}")

    def write_bytes(self, offset: int, data: bytes | bytearray | memoryview) -> None:
        n = len(data)
        self._check_range(offset, n)
        self.buf[offset:offset + n] = data
        self.stats.bytes_written += n
        self.stats.words_written += words_touched(offset, n)
        if self.record_writes:
            self.write_log.append(("w", offset, bytes(data)))

    def write_atomic64(self, offset: int, value: int) -> None:
        if offset % WORD != 0:
            raise MisalignedAtomic(f"offset {offset} not 8-byte aligned")
        self._check_range(offset, WORD)
        _U64.pack_into(self.buf, offset, value)
        self.stats.bytes_written += WORD
        self.stats.words_written += 1
        if self.record_writes:
            self.write_log.append(("w", offset, bytes(self.buf[offset:offset + WORD])))

    def read_bytes(self, offset: int, length: int) -> bytes:
        self._check_range(offset, length)
        return bytes(self.buf[offset:offset + length])

    def read_u64(self, offset: int) -> int:
        self._check_range(offset, WORD)
        return _U64.unpack_from(self.buf, offset)[0]

    def persist_barrier(self) -> None:
        self.stats.barriers += 1
        if self.record_writes:
            self.write_log.append(("b", self.stats.barriers, b""))
        plan = self.crash_plan
        if plan is None:
            return
        b = self.stats.barriers
        if b in plan.snapshot_at:
            self.snapshots.append((b, bytes(self.buf)))
        if plan.crash_at == b:
            self.snapshots.append((b, bytes(self.buf)))
            raise SimulatedCrash(f"crash injected at barrier {b}")

    # -- allocator --------------------------------------------------------

    def alloc_block(self) -> int:
        head = self.read_u64(SB_FREE_HEAD)
        if head != 0:
            nxt = self.read_u64(head)
            self.write_atomic64(SB_FREE_HEAD, nxt)
            return head
        bump = self.read_u64(SB_BUMP)
        off = (bump + BLOCK_SIZE - 1) & ~(BLOCK_SIZE - 1)
        if off + BLOCK_SIZE > self.capacity:
            raise OutOfSpace("no room for another block")
        self.write_atomic64(SB_BUMP, off + BLOCK_SIZE)
        return off

    def free_block(self, offset: int) -> None:
        if offset % BLOCK_SIZE != 0 or offset == 0:
            raise ValueError(f"not a block offset: {offset}")
        head = self.read_u64(SB_FREE_HEAD)
        self.write_atomic64(offset, head)
        self.write_atomic64(SB_FREE_HEAD, offset)

    def alloc_name_bytes(self, n: int) -> int:
        if n <= 0:
            raise ValueError("allocation size must be positive")
        need = (n + WORD - 1) & ~(WORD - 1)
        off = self.read_u64(SB_BUMP)
        if off + need > self.capacity:
            raise OutOfSpace("name heap exhausted")
        self.write_atomic64(SB_BUMP, off + need)
        return off

    # -- image dump/load --------------------------------------------------

    def to_bytes(self) -> bytes:
        return bytes(self.buf)

    @classmethod
    def from_bytes(cls, image: bytes | bytearray, *, record_writes: bool = False) -> "PmRegion":
        region = cls(len(image), record_writes=record_writes, _format=False)
        region.buf[:] = image
        if bytes(region.buf[SB_MAGIC:SB_MAGIC + 8]) != MAGIC:
            raise CorruptImage("bad region magic")
        return region

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.buf)

    @classmethod
    def load(cls, path, *, record_writes: bool = False) -> "PmRegion":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read(), record_writes=record_writes)


class CorruptImage(OutOfBounds):
    """Region image fails the superblock magic check."""
