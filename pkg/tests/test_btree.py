import random

import pytest

from cibdir.btree import LEAF_CAP, BTreeIndex
from cibdir.errors import NotFound, OutOfSpace
from cibdir.names import append_name, hash_name
from cibdir.pm import PmRegion


def fresh(cap=1 << 25, shadowing=True):
    r = PmRegion(cap)
    return r, BTreeIndex(r, shadowing=shadowing)


def put(r, t, name, inode):
    nb = name.encode()
    t.insert(hash_name(nb), append_name(r, nb), inode)
    return nb


class TestStructure:
    def test_cap_inserts_keep_a_single_leaf(self):
        r, t = fresh()
        for i in range(LEAF_CAP):
            put(r, t, f"one{i:04d}", i + 1)
        t.lookup(hash_name(b"one0000"), b"one0000")
        assert t.max_probes == 1

    def test_cap_plus_one_grows_the_root(self):
        r, t = fresh()
        for i in range(LEAF_CAP + 1):
            put(r, t, f"two{i:04d}", i + 1)
        for i in range(LEAF_CAP + 1):
            assert t.lookup(hash_name(f"two{i:04d}".encode()),
                            f"two{i:04d}".encode()) == i + 1
        assert t.max_probes == 2
        t.validate()

    def test_validator_after_heavy_mutation(self):
        r, t = fresh(1 << 26)
        rng = random.Random(2)
        live = {}
        for step in range(5000):
            name = f"mut{rng.randrange(2000):05d}"
            if name not in live and rng.random() < 0.7:
                put(r, t, name, step + 1)
                live[name] = step + 1
            elif name in live:
                t.delete(hash_name(name.encode()), name.encode())
                del live[name]
        t.validate()
        for name, ino in live.items():
            assert t.lookup(hash_name(name.encode()), name.encode()) == ino

    def test_full_run_of_one_key_is_out_of_space(self):
        r, t = fresh()
        key = 12345
        for i in range(LEAF_CAP):
            t.insert(key, append_name(r, f"c{i:04d}"), i + 1)
        with pytest.raises(OutOfSpace):
            t.insert(key, append_name(r, "clash"), 999)

    def test_colliding_keys_disambiguated_by_name(self):
        r, t = fresh()
        key = 777
        t.insert(key, append_name(r, "alpha"), 1)
        t.insert(key, append_name(r, "beta"), 2)
        assert t.lookup(key, b"alpha") == 1
        assert t.lookup(key, b"beta") == 2
        with pytest.raises(NotFound):
            t.lookup(key, b"gamma")


class TestDeletion:
    def test_delete_then_lookup_not_found(self):
        r, t = fresh()
        put(r, t, "gone", 5)
        t.delete(hash_name(b"gone"), b"gone")
        with pytest.raises(NotFound):
            t.lookup(hash_name(b"gone"), b"gone")

    def test_lazy_deletion_counts_underflows(self):
        r, t = fresh()
        for i in range(LEAF_CAP + 1):  # force one split first
            put(r, t, f"uf{i:04d}", i + 1)
        assert t.underflows == 0
        for i in range(LEAF_CAP + 1):
            t.delete(hash_name(f"uf{i:04d}".encode()), f"uf{i:04d}".encode())
        assert t.underflows > 0
        t.validate()


class TestWriteCost:
    def grow(self, shadowing, n=2000):
        r, t = fresh(1 << 26, shadowing=shadowing)
        base = r.stats.snapshot()
        for i in range(n):
            put(r, t, f"wc{i:05d}", i + 1)
        return r.stats.delta(base).bytes_written / n

    def test_shadowing_costs_a_path_per_insert(self):
        per_op = self.grow(shadowing=True)
        # every insert rewrites at least the whole leaf in shadow mode
        assert per_op > 1000

    def test_in_place_is_much_cheaper_than_shadowing(self):
        assert self.grow(shadowing=True) > 2 * self.grow(shadowing=False)


class TestOracleFuzz:
    def test_random_ops_match_shadow_map(self):
        r, t = fresh(1 << 26)
        rng = random.Random(17)
        shadow = {}
        for step in range(8000):
            name = f"bz{rng.randrange(1500):05d}"
            nb = name.encode()
            key = hash_name(nb)
            roll = rng.random()
            if roll < 0.5 and name not in shadow:
                t.insert(key, append_name(r, nb), step + 1)
                shadow[name] = step + 1
            elif roll < 0.8:
                if name in shadow:
                    assert t.lookup(key, nb) == shadow[name]
                else:
                    with pytest.raises(NotFound):
                        t.lookup(key, nb)
            elif name in shadow:
                t.delete(key, nb)
                del shadow[name]
        t.validate()
        for name, ino in shadow.items():
            assert t.lookup(hash_name(name.encode()), name.encode()) == ino
