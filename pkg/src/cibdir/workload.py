"""Deterministic workload generation.

A workload is a flat list of operations: ("create", name, inode_no),
("open", name) or ("delete", name). The seed fully determines the
sequence, so identical specs replay bit-identically.

The mixed kinds approximate the directory-metadata op mixes of the
Filebench Webproxy and Varmail personalities (file data I/O is out of
scope here):
    mixed-webproxy: per file, 1 create + 5 opens of it + 1 delete +
                    5 opens of other files (12 ops/file)
    mixed-varmail:  create/open/delete per file, with every second file
                    re-created afterwards
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

KINDS = ("create-n", "lookup-n", "delete-n", "mixed-webproxy", "mixed-varmail",
         "crash-fuzz")
SCHEMES = ("cib", "trad", "btree")

Op = tuple


@dataclass(frozen=True)
class WorkloadSpec:
    kind: str
    n_files: int
    seed: int = 0
    scheme: str = "cib"
    name_pattern: str = "f{:08d}"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown workload kind {self.kind!r}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")


def gen_workload(spec: WorkloadSpec) -> list[Op]:
    rng = random.Random(spec.seed)
    n = spec.n_files
    names = [spec.name_pattern.format(i) for i in range(n)]
    ops: list[Op] = []
    kind = spec.kind
    if kind == "create-n":
        order = list(range(n))
        rng.shuffle(order)
        ops = [("create", names[i], i + 1) for i in order]
    elif kind == "lookup-n":
        order = list(range(n))
        rng.shuffle(order)
        ops = [("create", names[i], i + 1) for i in order]
        probe = list(names)
        rng.shuffle(probe)
        ops += [("open", nm) for nm in probe]
    elif kind == "delete-n":
        order = list(range(n))
        rng.shuffle(order)
        ops = [("create", names[i], i + 1) for i in order]
        victims = list(names)
        rng.shuffle(victims)
        ops += [("delete", nm) for nm in victims]
    elif kind in ("mixed-webproxy", "crash-fuzz"):
        for i in range(n):
            ops.append(("create", names[i], i + 1))
            ops += [("open", names[i])] * 5
            ops.append(("delete", names[i]))
            for _ in range(5):
                j = rng.randrange(n - 1) if n > 1 else 0
                if j >= i:
                    j += 1
                ops.append(("open", names[j % n]))
    elif kind == "mixed-varmail":
        for i in range(n):
            ops.append(("create", names[i], i + 1))
            ops.append(("open", names[i]))
            ops.append(("delete", names[i]))
        for i in range(0, n, 2):
            ops.append(("create", names[i], n + i + 1))
    return ops


def files_for_ops(kind: str, ops: int) -> int:
    """Pick n_files so the generated sequence has roughly ``ops`` operations."""
    per_file = {"create-n": 1, "lookup-n": 2, "delete-n": 2,
                "mixed-webproxy": 12, "crash-fuzz": 12, "mixed-varmail": 3.5}[kind]
    return max(1, round(ops / per_file))
