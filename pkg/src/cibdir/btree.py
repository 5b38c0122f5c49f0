"""B+-tree directory-index baseline over the instrumented region.

Nodes are 4096-byte blocks (order 170, matching the content-indexed
block size):
    +0   count   (u32)
    +4   is_leaf (u8), 3 bytes pad
    +8   next    (u64, leaf sibling; informational)
    leaf:     170 entries of (key u64, name_ptr u64, inode_no u64) at +16
    internal: 169 keys at +16, 170 children (u64) at +1368

Routing sends a key to child ``#separators <= key``, and leaf splits are
adjusted to run boundaries so all entries sharing a hash key stay in one
leaf; collisions are disambiguated by filename comparison there.

Consistency cost is modeled by shadow (copy-on-write) updates: every
node touched by a mutation is rewritten to a fresh block and the root
pointer is swapped atomically. ``shadowing=False`` instead writes only
the changed byte spans in place, as a lower bound. Deletion is lazy: no
rebalancing, underflowing nodes are tolerated and counted.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import NotFound, OutOfSpace
from .names import read_name
from .pm import BLOCK_SIZE, PmRegion

LEAF_CAP = 170
IKEY_CAP = 169
ENTRY = 24
H_SIZE = 16
CHILD_OFF = H_SIZE + 8 * IKEY_CAP  # 1368

_HDR = struct.Struct("<IB3xQ")
_E = struct.Struct("<QQQ")


def _leaf_image(entries: bytes, nxt: int) -> bytes:
    img = _HDR.pack(len(entries) // ENTRY, 1, nxt) + entries
    return img + b"\0" * (BLOCK_SIZE - len(img))

def _internal_image(keys: list[int], children: list[int]) -> bytes:
    img = bytearray(BLOCK_SIZE)
    _HDR.pack_into(img, 0, len(keys), 0, 0)
    struct.pack_into(f"<{len(keys)}Q", img, H_SIZE, *keys)
    struct.pack_into(f"<{len(children)}Q", img, CHILD_OFF, *children)
    return bytes(img)


class BTreeIndex:
    def __init__(self, region: PmRegion, *, shadowing: bool = True):
        self.region = region
        self.shadowing = shadowing
        self.root_ptr_off = region.alloc_name_bytes(8)
        root = region.alloc_block()
        region.write_bytes(root, _leaf_image(b"", 0))
        region.persist_barrier()
        region.write_atomic64(self.root_ptr_off, root)
        region.persist_barrier()
        self.underflows = 0
        self.last_probes = 0
        self.max_probes = 0

    @property
    def root(self) -> int:
        return self.region.read_u64(self.root_ptr_off)

    # -- node access ------------------------------------------------------

    def _header(self, off: int) -> tuple[int, bool, int]:
        count, leaf, _pad1, _p2, _p3, nxt = struct.unpack_from("<IBBBBQ", self.region.buf, off)
        return count, bool(leaf), nxt

    def _leaf_keys(self, off: int, count: int) -> np.ndarray:
        return np.frombuffer(self.region.buf, dtype="<u8", count=count * 3,
                             offset=off + H_SIZE)[0::3]

    def _ikeys(self, off: int, count: int) -> np.ndarray:
        return np.frombuffer(self.region.buf, dtype="<u8", count=count, offset=off + H_SIZE)

    def _child(self, off: int, idx: int) -> int:
        return self.region.read_u64(off + CHILD_OFF + 8 * idx)

    def _find_leaf(self, key: int) -> tuple[int, list[tuple[int, int]]]:
        """Descend to the covering leaf; returns (leaf, path of (node, child idx))."""
        off = self.root
        path: list[tuple[int, int]] = []
        probes = 1
        while True:
            count, leaf, _ = self._header(off)
            if leaf:
                self.last_probes = probes
                if probes > self.max_probes:
                    self.max_probes = probes
                return off, path
            idx = int(np.searchsorted(self._ikeys(off, count), key, side="right"))
            path.append((off, idx))
            off = self._child(off, idx)
            probes += 1

    # -- public operations -------------------------------------------------

    def lookup(self, key: int, name: bytes) -> int:
        leaf, _ = self._find_leaf(key)
        count, _, _ = self._header(leaf)
        keys = self._leaf_keys(leaf, count)
        lo = int(np.searchsorted(keys, key, side="left"))
        hi = int(np.searchsorted(keys, key, side="right"))
        for pos in range(lo, hi):
            k, name_ptr, inode = _E.unpack_from(self.region.buf, leaf + H_SIZE + ENTRY * pos)
            if read_name(self.region, name_ptr) == name:
                return inode
        raise NotFound(name.decode("utf-8", "replace"))

    def insert(self, key: int, name_ptr: int, inode_no: int) -> None:
        leaf, path = self._find_leaf(key)
        count, _, nxt = self._header(leaf)
        keys = self._leaf_keys(leaf, count)
        pos = int(np.searchsorted(keys, key, side="right"))
        e = _E.pack(key, name_ptr, inode_no)
        old = bytes(self.region.buf[leaf + H_SIZE:leaf + H_SIZE + count * ENTRY])
        entries = old[:pos * ENTRY] + e + old[pos * ENTRY:]
        if count < LEAF_CAP:
            self._commit(path, {leaf: _leaf_image(entries, nxt)}, {}, None)
            return
        # leaf split, adjusted to a run boundary so equal keys never straddle
        n = count + 1
        allkeys = np.frombuffer(entries, dtype="<u8")[0::3]
        mid = n // 2
        while mid < n and allkeys[mid] == allkeys[mid - 1]:
            mid += 1
        if mid == n:
            mid = n // 2
            while mid > 0 and allkeys[mid] == allkeys[mid - 1]:
                mid -= 1
        if mid == 0:
            raise OutOfSpace("leaf holds a full run of one hash key")
        right = self.region.alloc_block()
        sep = int(allkeys[mid])
        news = {right: _leaf_image(entries[mid * ENTRY:], nxt)}
        mods = {leaf: _leaf_image(entries[:mid * ENTRY], right)}
        new_root = self._insert_up(path, sep, right, mods, news)
        self._commit(path, mods, news, new_root)

    def delete(self, key: int, name: bytes) -> None:
        leaf, path = self._find_leaf(key)
        count, _, nxt = self._header(leaf)
        keys = self._leaf_keys(leaf, count)
        lo = int(np.searchsorted(keys, key, side="left"))
        hi = int(np.searchsorted(keys, key, side="right"))
        for pos in range(lo, hi):
            _k, name_ptr, _ino = _E.unpack_from(self.region.buf, leaf + H_SIZE + ENTRY * pos)
            if read_name(self.region, name_ptr) == name:
                old = bytes(self.region.buf[leaf + H_SIZE:leaf + H_SIZE + count * ENTRY])
                entries = old[:pos * ENTRY] + old[(pos + 1) * ENTRY:]
                if count - 1 < LEAF_CAP // 2:
                    self.underflows += 1
                self._commit(path, {leaf: _leaf_image(entries, nxt)}, {}, None)
                return
        raise NotFound(name.decode("utf-8", "replace"))

    # -- structural plumbing ----------------------------------------------

    def _insert_up(self, path: list[tuple[int, int]], sep: int, new_child: int,
                   mods: dict[int, bytes], news: dict[int, bytes]) -> int | None:
        """Thread a (separator, right child) up the path; returns new root or None."""
        for level in range(len(path) - 1, -1, -1):
            node, idx = path[level]
            count, _, _ = self._header(node)
            keys = [int(k) for k in self._ikeys(node, count)]
            children = [self._child(node, i) for i in range(count + 1)]
            keys.insert(idx, sep)
            children.insert(idx + 1, new_child)
            if count < IKEY_CAP:
                mods[node] = _internal_image(keys, children)
                return None
            # internal split: promote the middle key
            m = len(keys) // 2
            promote = keys[m]
            right = self.region.alloc_block()
            news[right] = _internal_image(keys[m + 1:], children[m + 1:])
            mods[node] = _internal_image(keys[:m], children[:m + 1])
            sep, new_child = promote, right
        # split reached the top: grow a new root
        old_root = path[0][0] if path else next(iter(mods))
        new_root = self.region.alloc_block()
        news[new_root] = _internal_image([sep], [old_root, new_child])
        return new_root

    def _commit(self, path: list[tuple[int, int]], mods: dict[int, bytes],
                news: dict[int, bytes], new_root: int | None) -> None:
        region = self.region
        if not self.shadowing:
            for off, img in news.items():
                region.write_bytes(off, self._used(img))
            for off, img in mods.items():
                self._diff_write(off, img)
            if new_root is not None:
                region.persist_barrier()
                region.write_atomic64(self.root_ptr_off, new_root)
            region.persist_barrier()
            return
        # shadow mode: relocate the whole root-to-leaf path, deepest first,
        # patching child pointers through the relocation map, then swap the root.
        path_nodes = [off for off, _ in path]
        for off in path_nodes:
            if off not in mods:
                mods[off] = bytes(region.buf[off:off + BLOCK_SIZE])
        # leaf (not part of path) first, then internal nodes bottom-up
        order = [off for off in mods if off not in path_nodes]
        order += list(reversed(path_nodes))
        relocation: dict[int, int] = {}
        for off in order:
            img = self._patch(mods[off], relocation)
            dst = region.alloc_block()
            region.write_bytes(dst, self._used(img))
            relocation[off] = dst
        for off, img in news.items():
            region.write_bytes(off, self._used(self._patch(img, relocation)))
        region.persist_barrier()
        root_now = new_root if new_root is not None else relocation.get(self.root, self.root)
        root_now = relocation.get(root_now, root_now)
        region.write_atomic64(self.root_ptr_off, root_now)
        region.persist_barrier()
        for off in relocation:
            region.free_block(off)

    @staticmethod
    def _used(img: bytes) -> bytes:
        count, leaf, _p1, _p2, _p3, _nxt = struct.unpack_from("<IBBBBQ", img)
        end = H_SIZE + count * ENTRY if leaf else CHILD_OFF + 8 * (count + 1)
        return img[:end]

    def _patch(self, img: bytes, relocation: dict[int, int]) -> bytes:
        if not relocation:
            return img
        count, leaf, _p1, _p2, _p3, _nxt = struct.unpack_from("<IBBBBQ", img)
        if leaf:
            return img
        out = bytearray(img)
        for i in range(count + 1):
            child = struct.unpack_from("<Q", out, CHILD_OFF + 8 * i)[0]
            if child in relocation:
                struct.pack_into("<Q", out, CHILD_OFF + 8 * i, relocation[child])
        return bytes(out)

    def _diff_write(self, off: int, img: bytes) -> None:
        """Write only the byte spans that actually change (in-place mode)."""
        used = self._used(img)
        cur = np.frombuffer(self.region.buf, dtype=np.uint8, count=len(used), offset=off)
        new = np.frombuffer(used, dtype=np.uint8)
        dirty = np.nonzero(cur != new)[0]
        if len(dirty) == 0:
            return
        # merge runs separated by small clean gaps into one write each
        start = prev = int(dirty[0])
        for i in dirty[1:]:
            i = int(i)
            if i - prev > 32:
                self.region.write_bytes(off + start, used[start:prev + 1])
                start = i
            prev = i
        self.region.write_bytes(off + start, used[start:prev + 1])

    # -- validation --------------------------------------------------------

    def validate(self) -> None:
        """Assert structural invariants; raises AssertionError on violation."""
        leaf_depths: set[int] = set()
        prev_leaf_max: list[int] = [-1]

        def walk(off: int, lo: int, hi: int, depth: int) -> None:
            count, leaf, _ = self._header(off)
            if leaf:
                leaf_depths.add(depth)
                keys = [int(k) for k in self._leaf_keys(off, count)]
                assert keys == sorted(keys), "leaf keys unsorted"
                assert all(lo <= k < hi for k in keys), "leaf key outside bounds"
                if keys:
                    assert prev_leaf_max[0] < keys[0], "equal keys straddle leaves"
                    prev_leaf_max[0] = keys[-1]
                return
            assert 1 <= count <= IKEY_CAP, "internal key count out of range"
            keys = [int(k) for k in self._ikeys(off, count)]
            assert keys == sorted(keys), "internal keys unsorted"
            assert all(lo <= k < hi for k in keys), "separator outside bounds"
            bounds = [lo] + keys + [hi]
            for i in range(count + 1):
                walk(self._child(off, i), bounds[i], bounds[i + 1], depth + 1)

        walk(self.root, 0, 1 << 64, 0)
        assert len(leaf_depths) == 1, "leaves at unequal depth"
