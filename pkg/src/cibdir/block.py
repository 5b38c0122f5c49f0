"""The 4096-byte directory block.

Layout (little-endian, normative):
    0..7    min_key   (u64)
    8..15   max_key   (u64)
    16..23  next_ptr  (u64 byte offset of successor block, 0 = end)
    24..31  flags     (u64; bit 0 = SPLIT_IN_PROGRESS)
    32..63  bitmap    (256 bits; bits 0..167 = slot validity, rest zero)
    64..4095  168 dentry slots of 24 bytes each

Slot contents are never zeroed on delete; the bitmap bit is the sole
validity authority. Insert publishes slot bytes before the bitmap bit so
that a set bit always refers to a fully written dentry in every crash
snapshot.
"""

from __future__ import annotations

import struct
from typing import Iterator, Optional

import numpy as np

from .errors import BlockFull, SlotNotValid
from .names import DENTRY_SIZE, Dentry, read_name
from .pm import BLOCK_SIZE, PmRegion

HEADER_SIZE = 64
SLOT_COUNT = 168

OFF_MIN = 0
OFF_MAX = 8
OFF_NEXT = 16
OFF_FLAGS = 24
OFF_BITMAP = 32
BITMAP_WORDS = 4

FLAG_SPLIT_IN_PROGRESS = 1

MAX_KEY = (1 << 64) - 1

# valid bits per bitmap word: 64 + 64 + 40 + 0
_WORD_MASKS = ((1 << 64) - 1, (1 << 64) - 1, (1 << 40) - 1, 0)

_HEADER = struct.Struct("<QQQQ")


def slot_offset(block: int, slot: int) -> int:
    return block + HEADER_SIZE + DENTRY_SIZE * slot


def init_block(region: PmRegion, block: int, min_key: int, max_key: int,
               next_ptr: int = 0) -> None:
    """Write a fresh header with an empty bitmap. Caller persists."""
    region.write_bytes(block, _HEADER.pack(min_key, max_key, next_ptr, 0) + b"\0" * 32)


def block_min(region: PmRegion, block: int) -> int:
    return region.read_u64(block + OFF_MIN)


def block_max(region: PmRegion, block: int) -> int:
    return region.read_u64(block + OFF_MAX)


def block_next(region: PmRegion, block: int) -> int:
    return region.read_u64(block + OFF_NEXT)


def block_flags(region: PmRegion, block: int) -> int:
    return region.read_u64(block + OFF_FLAGS)


def bitmap_word(region: PmRegion, block: int, w: int) -> int:
    return region.read_u64(block + OFF_BITMAP + 8 * w)


def _bit_is_set(region: PmRegion, block: int, slot: int) -> bool:
    return bool(bitmap_word(region, block, slot // 64) >> (slot % 64) & 1)


def block_lookup(region: PmRegion, block: int, key: int,
                 name: bytes) -> Optional[tuple[int, int]]:
    """Find the dentry matching (key, name); returns (slot, inode_no) or None.

    Hash collisions are resolved by comparing the stored filename. Performs
    zero PM writes.
    """
    keys = np.frombuffer(region.buf, dtype="<u8", count=SLOT_COUNT * 3,
                         offset=block + HEADER_SIZE)[0::3]
    bits = np.unpackbits(
        np.frombuffer(region.buf, dtype=np.uint8, count=21, offset=block + OFF_BITMAP),
        bitorder="little")
    for slot in np.nonzero((keys == key) & bits.astype(bool))[0]:
        d = Dentry.unpack(region.buf, slot_offset(block, int(slot)))
        if read_name(region, d.name_ptr) == name:
            return int(slot), d.inode_no
    return None


def find_free_slot(region: PmRegion, block: int) -> int:
    for w in range(3):
        word = bitmap_word(region, block, w)
        inv = ~word & _WORD_MASKS[w]
        if inv:
            return 64 * w + ((inv & -inv).bit_length() - 1)
    raise BlockFull(f"block at {block} has no free slot")


def block_insert(region: PmRegion, block: int, d: Dentry) -> int:
    """Insert into the lowest free slot; publish-after-write ordering.

    Caller must have checked the key range and duplicate names.
    """
    assert block_min(region, block) <= d.hash_key <= block_max(region, block)
    slot = find_free_slot(region, block)
    region.write_bytes(slot_offset(block, slot), d.pack())
    region.persist_barrier()
    w = slot // 64
    word = bitmap_word(region, block, w) | (1 << (slot % 64))
    region.write_atomic64(block + OFF_BITMAP + 8 * w, word)
    region.persist_barrier()
    return slot


def block_delete(region: PmRegion, block: int, slot: int) -> None:
    """Clear one validity bit with a single atomic word write."""
    if not 0 <= slot < SLOT_COUNT or not _bit_is_set(region, block, slot):
        raise SlotNotValid(f"slot {slot} is not valid")
    w = slot // 64
    word = bitmap_word(region, block, w) & ~(1 << (slot % 64))
    region.write_atomic64(block + OFF_BITMAP + 8 * w, word)
    region.persist_barrier()


def block_valid_count(region: PmRegion, block: int) -> int:
    return sum(bitmap_word(region, block, w).bit_count() for w in range(3))


def block_iter(region: PmRegion, block: int) -> Iterator[tuple[int, Dentry]]:
    """Yield (slot, dentry) for valid slots in ascending slot order."""
    for w in range(3):
        word = bitmap_word(region, block, w)
        while word:
            bit = (word & -word).bit_length() - 1
            word &= word - 1
            slot = 64 * w + bit
            yield slot, Dentry.unpack(region.buf, slot_offset(block, slot))
