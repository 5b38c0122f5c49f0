"""Conventional sequential-scan directory baseline.

Variable-length records tile each 4096-byte block exactly:
    +0   inode_no (u64; 0 marks a free hole)
    +8   d_len    (u16, total record length including padding)
    +10  name_len (u8)
    +11  pad      (1 byte)
    +12  name bytes (live records only)

Every lookup/create scans records in block order. Creates reuse the
first hole that fits (splitting it), appending a new block when none
does; deletes zero the inode word and coalesce with an immediately
following hole. A volatile mirror of (offset, name_len, name prefix)
rows keeps the O(n) scan vectorized without changing its asymptotics;
all mutations go through the instrumented region.
"""

from __future__ import annotations

import struct
from bisect import bisect_left, insort

import numpy as np

from .errors import AlreadyExists, NotFound
from .pm import BLOCK_SIZE, PmRegion

REC_HEADER = 12
PREFIX = 24

_HDR = struct.Struct("<QHBx")
_U16 = struct.Struct("<H")


def _align4(n: int) -> int:
    return (n + 3) & ~3


class TradDir:
    def __init__(self, region: PmRegion):
        self.region = region
        self.blocks: list[int] = []
        self.holes: dict[int, int] = {}       # offset -> d_len
        self._hole_order: list[int] = []      # offsets, ascending
        # vectorized scan mirror, rows in scan (offset) order
        self._cap = 64
        self._n = 0
        self._off = np.zeros(self._cap, dtype=np.int64)
        self._nlen = np.zeros(self._cap, dtype=np.int32)
        self._pref = np.zeros((self._cap, PREFIX), dtype=np.uint8)
        self.last_probes = 0
        self.max_probes = 0
        self.total_probes = 0

    @property
    def record_count(self) -> int:
        return self._n

    # -- mirror upkeep ----------------------------------------------------

    def _grow(self) -> None:
        self._cap *= 2
        self._off = np.resize(self._off, self._cap)
        self._nlen = np.resize(self._nlen, self._cap)
        self._pref = np.resize(self._pref, (self._cap, PREFIX))

    def _mirror_insert(self, off: int, name: bytes) -> None:
        if self._n == self._cap:
            self._grow()
        pos = int(np.searchsorted(self._off[:self._n], off))
        if pos < self._n:
            self._off[pos + 1:self._n + 1] = self._off[pos:self._n]
            self._nlen[pos + 1:self._n + 1] = self._nlen[pos:self._n]
            self._pref[pos + 1:self._n + 1] = self._pref[pos:self._n]
        self._off[pos] = off
        self._nlen[pos] = len(name)
        row = np.zeros(PREFIX, dtype=np.uint8)
        row[:min(len(name), PREFIX)] = np.frombuffer(name[:PREFIX], dtype=np.uint8)
        self._pref[pos] = row
        self._n += 1

    def _mirror_delete(self, pos: int) -> None:
        self._off[pos:self._n - 1] = self._off[pos + 1:self._n]
        self._nlen[pos:self._n - 1] = self._nlen[pos + 1:self._n]
        self._pref[pos:self._n - 1] = self._pref[pos + 1:self._n]
        self._n -= 1

    def _scan(self, name: bytes) -> int | None:
        """Sequential duplicate scan; returns mirror row index or None.

        Records probe counts: a hit costs its scan position + 1, a miss
        costs the full record count.
        """
        n = self._n
        if n == 0:
            self._count_probes(0)
            return None
        target = np.zeros(PREFIX, dtype=np.uint8)
        target[:min(len(name), PREFIX)] = np.frombuffer(name[:PREFIX], dtype=np.uint8)
        cand = np.nonzero((self._nlen[:n] == len(name))
                          & (self._pref[:n] == target).all(axis=1))[0]
        for pos in cand:
            off = int(self._off[pos])
            stored = bytes(self.region.buf[off + REC_HEADER:off + REC_HEADER + len(name)])
            if stored == name:
                self._count_probes(int(pos) + 1)
                return int(pos)
        self._count_probes(n)
        return None

    def _count_probes(self, probes: int) -> None:
        self.last_probes = probes
        self.total_probes += probes
        if probes > self.max_probes:
            self.max_probes = probes

    # -- hole management --------------------------------------------------

    def _add_hole(self, off: int, d_len: int) -> None:
        self.holes[off] = d_len
        insort(self._hole_order, off)

    def _take_hole(self, need: int) -> int | None:
        for off in self._hole_order:
            if self.holes[off] >= need:
                return off
        return None

    def _remove_hole(self, off: int) -> int:
        d_len = self.holes.pop(off)
        del self._hole_order[bisect_left(self._hole_order, off)]
        return d_len

    def _new_block(self) -> int:
        off = self.region.alloc_block()
        self.region.write_bytes(off, _HDR.pack(0, BLOCK_SIZE, 0))
        self.blocks.append(off)
        self._add_hole(off, BLOCK_SIZE)
        return off

    # -- operations -------------------------------------------------------

    def create(self, name: str | bytes, inode_no: int) -> None:
        nb = name.encode("utf-8") if isinstance(name, str) else bytes(name)
        if not 1 <= len(nb) <= 255:
            raise ValueError("bad name length")
        if inode_no == 0:
            raise ValueError("inode_no 0 is reserved for holes")
        if self._scan(nb) is not None:
            raise AlreadyExists(nb.decode("utf-8", "replace"))
        need = _align4(REC_HEADER + len(nb))
        hole = self._take_hole(need)
        if hole is None:
            hole = self._new_block()
        hole_len = self._remove_hole(hole)
        rem = hole_len - need
        if rem >= REC_HEADER:
            d_len = need
            self.region.write_bytes(hole + need, _HDR.pack(0, rem, 0))
            self._add_hole(hole + need, rem)
        else:
            d_len = hole_len  # absorb the unusable remainder
        self.region.write_bytes(hole, _HDR.pack(inode_no, d_len, len(nb)) + nb)
        self.region.persist_barrier()
        self._mirror_insert(hole, nb)

    def lookup(self, name: str | bytes) -> int:
        nb = name.encode("utf-8") if isinstance(name, str) else bytes(name)
        pos = self._scan(nb)
        if pos is None:
            raise NotFound(nb.decode("utf-8", "replace"))
        return self.region.read_u64(int(self._off[pos]))

    def delete(self, name: str | bytes) -> None:
        nb = name.encode("utf-8") if isinstance(name, str) else bytes(name)
        pos = self._scan(nb)
        if pos is None:
            raise NotFound(nb.decode("utf-8", "replace"))
        off = int(self._off[pos])
        (d_len,) = _U16.unpack_from(self.region.buf, off + 8)
        self.region.write_bytes(off, b"\0" * 8)  # records are only 4-byte aligned
        nxt = off + d_len
        if nxt % BLOCK_SIZE != 0 and nxt in self.holes:
            d_len += self._remove_hole(nxt)
            self.region.write_bytes(off + 8, _U16.pack(d_len))
        self.region.persist_barrier()
        self._add_hole(off, d_len)
        self._mirror_delete(pos)
