"""Content-indexed directory: range-partitioned sorted block list plus a
binary-searchable auxiliary address array.

Every directory is rooted in a 64-byte inode area whose mutable words are
8-byte aligned for atomic update:
    +0   list_head        offset of the first directory block
    +8   array_ptr        offset of the current address array (0 = none)
    +16  block_count
    +24  name_heap        heap bump at creation time (informational)
    +32  accel_threshold  block count above which the array is used

The block ranges partition the full 64-bit key space: the first block's
min_key is 0, the last block's max_key is 2^64-1, and consecutive ranges
abut. The address array is an on-PM (length, entries...) u64 sequence,
rebuilt copy-on-write and swapped in with a single atomic pointer write.
"""

from __future__ import annotations

import struct
from typing import Iterator

import numpy as np

from . import block as blk
from .block import (
    FLAG_SPLIT_IN_PROGRESS,
    MAX_KEY,
    OFF_BITMAP,
    OFF_FLAGS,
    OFF_MAX,
    OFF_NEXT,
    SLOT_COUNT,
)
from .errors import AlreadyExists, CorruptLayout, NotFound, UnsplittableBlock
from .names import Dentry, append_name, hash_name, read_name
from .pm import BLOCK_SIZE, SB_ROOT_DIR, PmRegion

INODE_SIZE = 64
I_LIST_HEAD = 0
I_ARRAY_PTR = 8
I_BLOCK_COUNT = 16
I_NAME_HEAP = 24
I_ACCEL = 32

DEFAULT_ACCEL_THRESHOLD = 1


class CibDir:
    """Handle to one content-indexed directory inside a region."""

    def __init__(self, region: PmRegion, inode_off: int):
        self.region = region
        self.inode_off = inode_off
        self.probe_hist: dict[int, int] = {}

    # -- persistent handle fields ----------------------------------------

    @property
    def list_head(self) -> int:
        return self.region.read_u64(self.inode_off + I_LIST_HEAD)

    @property
    def array_ptr(self) -> int:
        return self.region.read_u64(self.inode_off + I_ARRAY_PTR)

    @property
    def block_count(self) -> int:
        return self.region.read_u64(self.inode_off + I_BLOCK_COUNT)

    @property
    def accel_threshold(self) -> int:
        return self.region.read_u64(self.inode_off + I_ACCEL)

    # -- lifecycle --------------------------------------------------------

    @classmethod
    def new(cls, region: PmRegion,
            accel_threshold: int = DEFAULT_ACCEL_THRESHOLD) -> "CibDir":
        inode = region.alloc_name_bytes(INODE_SIZE)
        first = region.alloc_block()
        blk.init_block(region, first, 0, MAX_KEY)
        region.persist_barrier()
        region.write_atomic64(inode + I_LIST_HEAD, first)
        region.write_atomic64(inode + I_ARRAY_PTR, 0)
        region.write_atomic64(inode + I_BLOCK_COUNT, 1)
        region.write_atomic64(inode + I_NAME_HEAP, region.read_u64(8))
        region.write_atomic64(inode + I_ACCEL, accel_threshold)
        region.persist_barrier()
        if region.read_u64(SB_ROOT_DIR) == 0:
            region.write_atomic64(SB_ROOT_DIR, inode)
            region.persist_barrier()
        return cls(region, inode)

    @classmethod
    def open(cls, region: PmRegion, inode_off: int | None = None) -> "CibDir":
        if inode_off is None:
            inode_off = region.read_u64(SB_ROOT_DIR)
            if inode_off == 0:
                raise NotFound("region has no root directory")
        return cls(region, inode_off)

    # -- block location ---------------------------------------------------

    def iter_blocks(self) -> Iterator[int]:
        region = self.region
        off = self.list_head
        limit = region.capacity // BLOCK_SIZE + 1
        while off:
            yield off
            off = blk.block_next(region, off)
            limit -= 1
            if limit < 0:
                raise CorruptLayout("block list does not terminate")

    def locate_block(self, key: int) -> int:
        """Return the unique block whose range covers ``key``."""
        region = self.region
        aoff = self.array_ptr
        if self.block_count <= self.accel_threshold or aoff == 0:
            probes = 0
            for off in self.iter_blocks():
                probes += 1
                if blk.block_min(region, off) <= key <= blk.block_max(region, off):
                    self._note_probes(probes)
                    return off
            raise CorruptLayout(f"no block covers key {key:#x}")
        n = region.read_u64(aoff)
        lo, hi = 0, n - 1
        probes = 0
        while lo < hi:
            mid = (lo + hi + 1) // 2
            probes += 1
            if blk.block_min(region, region.read_u64(aoff + 8 + 8 * mid)) <= key:
                lo = mid
            else:
                hi = mid - 1
        self._note_probes(probes + 1)
        return region.read_u64(aoff + 8 + 8 * lo)

    def _note_probes(self, probes: int) -> None:
        self.probe_hist[probes] = self.probe_hist.get(probes, 0) + 1

    @property
    def max_probes(self) -> int:
        return max(self.probe_hist, default=0)

    # -- file operations --------------------------------------------------

    def lookup(self, name: str | bytes) -> int:
        """Resolve a filename to its inode number. Zero PM writes."""
        nb = name.encode("utf-8") if isinstance(name, str) else bytes(name)
        key = hash_name(nb)
        found = blk.block_lookup(self.region, self.locate_block(key), key, nb)
        if found is None:
            raise NotFound(nb.decode("utf-8", "replace"))
        return found[1]

    def create(self, name: str | bytes, inode_no: int) -> None:
        nb = name.encode("utf-8") if isinstance(name, str) else bytes(name)
        key = hash_name(nb)
        region = self.region
        b = self.locate_block(key)
        if blk.block_lookup(region, b, key, nb) is not None:
            raise AlreadyExists(nb.decode("utf-8", "replace"))
        if blk.block_valid_count(region, b) == SLOT_COUNT:
            self.split_block(b)
            b = self.locate_block(key)
        name_ptr = append_name(region, nb)
        blk.block_insert(region, b, Dentry(key, inode_no, name_ptr))

    def delete(self, name: str | bytes) -> None:
        nb = name.encode("utf-8") if isinstance(name, str) else bytes(name)
        key = hash_name(nb)
        b = self.locate_block(key)
        found = blk.block_lookup(self.region, b, key, nb)
        if found is None:
            raise NotFound(nb.decode("utf-8", "replace"))
        blk.block_delete(self.region, b, found[0])

    def readdir(self) -> Iterator[tuple[bytes, int]]:
        """Yield (name, inode_no) for every live file, in block/slot order."""
        for off in self.iter_blocks():
            for _slot, d in blk.block_iter(self.region, off):
                yield read_name(self.region, d.name_ptr), d.inode_no

    # -- split ------------------------------------------------------------

    def split_block(self, b: int) -> None:
        """Divide a full block at its upper-median distinct key.

        Dentries with key >= the split key are copied (not moved) into a
        fresh successor block; each protocol step ends at a persist
        barrier so crash recovery can resume from on-PM state alone.
        """
        region = self.region
        entries = list(blk.block_iter(region, b))
        keys = sorted({d.hash_key for _s, d in entries})
        if len(keys) < 2:
            raise UnsplittableBlock("all dentries share one hash key")
        split_key = keys[(len(keys) + 1) // 2]

        # (1) mark the split in progress
        region.write_atomic64(b + OFF_FLAGS,
                              blk.block_flags(region, b) | FLAG_SPLIT_IN_PROGRESS)
        region.persist_barrier()

        # (2) build the fully populated new block, compacted into low slots
        new = region.alloc_block()
        moved = [(s, d) for s, d in entries if d.hash_key >= split_key]
        bitmap = (1 << len(moved)) - 1
        image = struct.pack("<QQQQ", split_key, blk.block_max(region, b),
                           blk.block_next(region, b), 0)
        image += bitmap.to_bytes(32, "little")
        image += b"".join(d.pack() for _s, d in moved)
        region.write_bytes(new, image)
        region.persist_barrier()

        # (3) publish the new block into the list
        region.write_atomic64(b + OFF_NEXT, new)
        region.persist_barrier()

        # (4) shrink the original block's range
        region.write_atomic64(b + OFF_MAX, split_key - 1)
        region.persist_barrier()

        # (5) invalidate the copied dentries, one atomic word per touched word
        clear = [0, 0, 0]
        for s, _d in moved:
            clear[s // 64] |= 1 << (s % 64)
        for w in range(3):
            if clear[w]:
                word = blk.bitmap_word(region, b, w) & ~clear[w]
                region.write_atomic64(b + OFF_BITMAP + 8 * w, word)
        region.persist_barrier()

        # (6) split finished
        region.write_atomic64(b + OFF_FLAGS,
                              blk.block_flags(region, b) & ~FLAG_SPLIT_IN_PROGRESS)
        region.persist_barrier()

        region.write_atomic64(self.inode_off + I_BLOCK_COUNT, self.block_count + 1)
        region.persist_barrier()

        # (7) refresh the address array
        if self.block_count > self.accel_threshold:
            if self.array_ptr:
                self._array_insert(b, new)
            else:
                self.build_array()

    # -- auxiliary array --------------------------------------------------

    def build_array(self) -> None:
        """Write a fresh address array from the block list and swap it in."""
        offs = list(self.iter_blocks())
        self._publish_array(offs)

    def _array_insert(self, after: int, new: int) -> None:
        # fast path for splits: splice the new block just after the old one
        region = self.region
        aoff = self.array_ptr
        n = region.read_u64(aoff)
        ent = np.frombuffer(region.buf, dtype="<u8", count=n, offset=aoff + 8)
        idx = np.nonzero(ent == after)[0]
        if len(idx) != 1:
            self.build_array()
            return
        i = int(idx[0])
        cut = aoff + 8 + 8 * (i + 1)
        payload = (struct.pack("<Q", n + 1)
                   + bytes(region.buf[aoff + 8:cut])
                   + struct.pack("<Q", new)
                   + bytes(region.buf[cut:aoff + 8 + 8 * n]))
        self._publish_payload(payload)

    def _publish_array(self, offs: list[int]) -> None:
        self._publish_payload(struct.pack(f"<{len(offs) + 1}Q", len(offs), *offs))

    def _publish_payload(self, payload: bytes) -> None:
        region = self.region
        new_arr = region.alloc_name_bytes(len(payload))
        region.write_bytes(new_arr, payload)
        region.persist_barrier()
        region.write_atomic64(self.inode_off + I_ARRAY_PTR, new_arr)
        region.persist_barrier()
        # old array space is retired (never reclaimed)

    # -- recovery ---------------------------------------------------------

    def recover(self) -> list[str]:
        """Repair any interrupted split from on-PM state and rebuild the array.

        Returns a report of the actions taken (empty after clean shutdown).
        """
        region = self.region
        report: list[str] = []
        blocks: list[int] = []
        for off in self.iter_blocks():
            if blk.block_flags(region, off) & FLAG_SPLIT_IN_PROGRESS:
                report.extend(self._repair_split(off))
            blocks.append(off)

        # range partition must hold now
        if blk.block_min(region, blocks[0]) != 0:
            raise CorruptLayout("first block min_key is not 0")
        for a, b in zip(blocks, blocks[1:]):
            if blk.block_max(region, a) + 1 != blk.block_min(region, b):
                raise CorruptLayout(f"ranges do not abut between {a} and {b}")
        if blk.block_max(region, blocks[-1]) != MAX_KEY:
            raise CorruptLayout("last block max_key is not 2^64-1")

        if self.block_count != len(blocks):
            region.write_atomic64(self.inode_off + I_BLOCK_COUNT, len(blocks))
            region.persist_barrier()
            report.append(f"block_count corrected to {len(blocks)}")

        if (len(blocks) > self.accel_threshold or self.array_ptr) \
                and not self._array_matches(blocks):
            self._publish_array(blocks)
            report.append("address array rebuilt")
        return report

    def _array_matches(self, blocks: list[int]) -> bool:
        aoff = self.array_ptr
        if aoff == 0:
            return False
        region = self.region
        if region.read_u64(aoff) != len(blocks):
            return False
        return all(region.read_u64(aoff + 8 + 8 * i) == off
                   for i, off in enumerate(blocks))

    def _repair_split(self, b: int) -> list[str]:
        region = self.region
        actions: list[str] = []
        nxt = blk.block_next(region, b)
        mx = blk.block_max(region, b)
        if nxt and blk.block_min(region, nxt) <= mx:
            # new block was published; finish shrinking the range
            region.write_atomic64(b + OFF_MAX, blk.block_min(region, nxt) - 1)
            region.persist_barrier()
            mx = blk.block_max(region, b)
            actions.append(f"block {b}: max_key restored to {mx:#x}")
        # drop any still-valid dentries now outside the range (copied set)
        clear = [0, 0, 0]
        for s, d in blk.block_iter(region, b):
            if d.hash_key > mx:
                clear[s // 64] |= 1 << (s % 64)
        if any(clear):
            for w in range(3):
                if clear[w]:
                    word = blk.bitmap_word(region, b, w) & ~clear[w]
                    region.write_atomic64(b + OFF_BITMAP + 8 * w, word)
            region.persist_barrier()
            actions.append(f"block {b}: invalidated copied dentries")
        region.write_atomic64(b + OFF_FLAGS,
                              blk.block_flags(region, b) & ~FLAG_SPLIT_IN_PROGRESS)
        region.persist_barrier()
        actions.append(f"block {b}: split flag cleared")
        return actions


def check_invariants(d: CibDir, *, verify_hashes: bool = False) -> int:
    """Full structural sweep; raises CorruptLayout on any violation.

    Returns the number of live dentries. Used by tests and the crash-fuzz
    harness after recovery.
    """
    region = d.region
    blocks = list(d.iter_blocks())
    if blk.block_min(region, blocks[0]) != 0:
        raise CorruptLayout("first block min_key != 0")
    if blk.block_max(region, blocks[-1]) != MAX_KEY:
        raise CorruptLayout("last block max_key != 2^64-1")
    prev_max = -1
    seen_names: set[bytes] = set()
    live = 0
    for off in blocks:
        mn, mx = blk.block_min(region, off), blk.block_max(region, off)
        if mn > mx:
            raise CorruptLayout(f"block {off}: min_key > max_key")
        if mn != prev_max + 1:
            raise CorruptLayout(f"block {off}: range does not abut predecessor")
        prev_max = mx
        if blk.block_flags(region, off) & FLAG_SPLIT_IN_PROGRESS:
            raise CorruptLayout(f"block {off}: split flag still set")
        for w in range(blk.BITMAP_WORDS):
            word = blk.bitmap_word(region, off, w)
            if word & ~blk._WORD_MASKS[w]:
                raise CorruptLayout(f"block {off}: reserved bitmap bits set")
        for _slot, dent in blk.block_iter(region, off):
            if not mn <= dent.hash_key <= mx:
                raise CorruptLayout(f"block {off}: dentry key outside range")
            name = read_name(region, dent.name_ptr)
            if name in seen_names:
                raise CorruptLayout(f"duplicate live name {name!r}")
            seen_names.add(name)
            if verify_hashes and hash_name(name) != dent.hash_key:
                raise CorruptLayout(f"hash mismatch for {name!r}")
            live += 1
    if d.block_count != len(blocks):
        raise CorruptLayout("block_count does not match the list")
    aoff = d.array_ptr
    if aoff:
        n = region.read_u64(aoff)
        if n != len(blocks):
            raise CorruptLayout("address array length mismatch")
        for i, off in enumerate(blocks):
            if region.read_u64(aoff + 8 + 8 * i) != off:
                raise CorruptLayout(f"address array entry {i} mismatch")
    return live
