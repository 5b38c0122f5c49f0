"""Benchmark runner, shadow-oracle verification, and crash-injection fuzzing.

Every benchmark run doubles as a correctness run: each operation result
is compared inline against an in-memory shadow map, and any disagreement
raises ``OracleMismatch``.
"""

from __future__ import annotations

import csv
import io
import math
import os
import random
import time
from dataclasses import dataclass, field

from .btree import BTreeIndex
from .cib import CibDir, check_invariants
from .errors import (
    AlreadyExists,
    NotFound,
    OracleMismatch,
    SimulatedCrash,
)
from .names import append_name, hash_name
from .pm import SB_ROOT_DIR, CrashPlan, PmRegion
from .trad import TradDir
from .workload import Op, WorkloadSpec, gen_workload

REGION_ENV = "BENCH_REGION_BYTES"

REPORT_COLUMNS = ("scheme", "workload", "n", "ops", "elapsed_s", "pm_bytes",
                  "pm_words", "barriers", "max_probes")


@dataclass
class RunReport:
    scheme: str
    workload: str
    n: int
    ops: int
    elapsed_s: float
    pm_bytes: int
    pm_words: int
    barriers: int
    max_probes: int
    probe_hist: dict[int, int] = field(default_factory=dict)
    aux_bytes: int = 0

    def row(self) -> list:
        return [self.scheme, self.workload, self.n, self.ops,
                f"{self.elapsed_s:.6f}", self.pm_bytes, self.pm_words,
                self.barriers, self.max_probes]


# -- scheme adapters ------------------------------------------------------

class CibScheme:
    name = "cib"

    def __init__(self, region: PmRegion):
        self.region = region
        self.dir = CibDir.new(region)

    def create(self, name: str, inode_no: int) -> None:
        self.dir.create(name, inode_no)

    def open(self, name: str) -> int:
        return self.dir.lookup(name)

    def delete(self, name: str) -> None:
        self.dir.delete(name)

    @property
    def max_probes(self) -> int:
        return self.dir.max_probes

    @property
    def probe_hist(self) -> dict[int, int]:
        return dict(self.dir.probe_hist)

    @property
    def aux_bytes(self) -> int:
        return 8 * (self.dir.block_count + 1) if self.dir.array_ptr else 0


class TradScheme:
    name = "trad"

    def __init__(self, region: PmRegion):
        self.region = region
        self.dir = TradDir(region)

    def create(self, name: str, inode_no: int) -> None:
        self.dir.create(name, inode_no)

    def open(self, name: str) -> int:
        return self.dir.lookup(name)

    def delete(self, name: str) -> None:
        self.dir.delete(name)

    @property
    def max_probes(self) -> int:
        return self.dir.max_probes

    probe_hist: dict[int, int] = {}
    aux_bytes = 0


class BTreeScheme:
    name = "btree"

    def __init__(self, region: PmRegion, *, shadowing: bool = True):
        self.region = region
        self.tree = BTreeIndex(region, shadowing=shadowing)

    def create(self, name: str, inode_no: int) -> None:
        nb = name.encode("utf-8")
        key = hash_name(nb)
        try:
            self.tree.lookup(key, nb)
        except NotFound:
            pass
        else:
            raise AlreadyExists(name)
        name_ptr = append_name(self.region, nb)
        self.tree.insert(key, name_ptr, inode_no)

    def open(self, name: str) -> int:
        nb = name.encode("utf-8")
        return self.tree.lookup(hash_name(nb), nb)

    def delete(self, name: str) -> None:
        nb = name.encode("utf-8")
        self.tree.delete(hash_name(nb), nb)

    @property
    def max_probes(self) -> int:
        return self.tree.max_probes

    probe_hist: dict[int, int] = {}

    @property
    def aux_bytes(self) -> int:
        # whole tree is auxiliary structure relative to the name heap
        return 0


def make_scheme(name: str, region: PmRegion, **kw):
    return {"cib": CibScheme, "trad": TradScheme, "btree": BTreeScheme}[name](region, **kw)


# -- region sizing --------------------------------------------------------

def region_capacity(spec: WorkloadSpec) -> int:
    """Size the region for the workload, unless BENCH_REGION_BYTES overrides."""
    env = os.environ.get(REGION_ENV)
    if env:
        return int(env)
    n = max(spec.n_files, 1)
    name_bytes = 40 * n + (1 << 16)
    if spec.scheme == "cib":
        blocks = n // 84 + 4
        struct_bytes = 4096 * blocks + 4 * (blocks + 2) ** 2 + 4096 * 4
    elif spec.scheme == "trad":
        struct_bytes = 34 * n + 4096 * 4
    else:
        blocks = n // 60 + 8
        struct_bytes = 4096 * blocks * 2 + (1 << 16)
    cap = 2 * (name_bytes + struct_bytes) + (1 << 20)
    return max(cap, 4 << 20)


# -- shadow oracle --------------------------------------------------------

_OK = "ok"
_NOT_FOUND = "notfound"
_EXISTS = "exists"


def _expected(shadow: dict[str, int], op: Op):
    kind = op[0]
    if kind == "create":
        return _EXISTS if op[1] in shadow else _OK
    if kind == "open":
        return shadow.get(op[1], _NOT_FOUND)
    if kind == "delete":
        return _OK if op[1] in shadow else _NOT_FOUND
    raise ValueError(f"unknown op {kind!r}")


def _apply_shadow(shadow: dict[str, int], op: Op) -> None:
    kind = op[0]
    if kind == "create" and op[1] not in shadow:
        shadow[op[1]] = op[2]
    elif kind == "delete":
        shadow.pop(op[1], None)


def _execute(scheme, op: Op):
    kind = op[0]
    try:
        if kind == "create":
            scheme.create(op[1], op[2])
            return _OK
        if kind == "open":
            return scheme.open(op[1])
        scheme.delete(op[1])
        return _OK
    except NotFound:
        return _NOT_FOUND
    except AlreadyExists:
        return _EXISTS


# -- benchmark run --------------------------------------------------------

def run(spec: WorkloadSpec, *, btree_shadowing: bool = True) -> RunReport:
    ops = gen_workload(spec)
    region = PmRegion(region_capacity(spec))
    kw = {"shadowing": btree_shadowing} if spec.scheme == "btree" else {}
    scheme = make_scheme(spec.scheme, region, **kw)
    base = region.stats.snapshot()
    shadow: dict[str, int] = {}
    elapsed = 0.0
    clock = time.perf_counter
    for op in ops:
        want = _expected(shadow, op)
        t0 = clock()
        got = _execute(scheme, op)
        elapsed += clock() - t0
        if got != want:
            raise OracleMismatch(f"{op}: expected {want!r}, got {got!r}")
        _apply_shadow(shadow, op)
    delta = region.stats.delta(base)
    return RunReport(
        scheme=spec.scheme, workload=spec.kind, n=spec.n_files, ops=len(ops),
        elapsed_s=elapsed, pm_bytes=delta.bytes_written,
        pm_words=delta.words_written, barriers=delta.barriers,
        max_probes=scheme.max_probes, probe_hist=scheme.probe_hist,
        aux_bytes=scheme.aux_bytes)


# -- crash fuzzing --------------------------------------------------------

@dataclass
class CrashFuzzReport:
    workload: str
    n: int
    total_barriers: int
    points_tested: int
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def _replay_to_crash(spec: WorkloadSpec, ops: list[Op], crash_at: int):
    """Run the workload until the injected crash; returns (snapshot, shadow, pending)."""
    region = PmRegion(region_capacity(spec))
    region.crash_plan = CrashPlan(crash_at=crash_at)
    shadow: dict[str, int] = {}
    pending: Op | None = None
    try:
        scheme = CibScheme(region)
        for op in ops:
            pending = op
            _execute(scheme, op)
            _apply_shadow(shadow, op)
            pending = None
    except SimulatedCrash:
        pass
    if not region.snapshots:
        # workload finished before the designated barrier; snapshot final state
        return bytes(region.buf), shadow, pending
    return region.snapshots[-1][1], shadow, pending


def _check_recovered(image: bytes, shadow: dict[str, int], pending: Op | None,
                     point: int) -> list[str]:
    failures: list[str] = []
    region = PmRegion.from_bytes(image)
    if region.read_u64(SB_ROOT_DIR) == 0:
        if shadow:
            failures.append(f"point {point}: directory lost with acknowledged ops")
        return failures
    d = CibDir.open(region)
    try:
        d.recover()
        check_invariants(d, verify_hashes=True)
    except Exception as exc:
        return [f"point {point}: recovery failed: {exc}"]

    pend_kind = pending[0] if pending else None
    pend_name = pending[1] if pending else None
    for name, ino in shadow.items():
        try:
            got = d.lookup(name)
        except NotFound:
            if not (pend_kind == "delete" and pend_name == name):
                failures.append(f"point {point}: acknowledged {name!r} lost")
            continue
        if got != ino:
            failures.append(f"point {point}: {name!r} resolves to {got}, want {ino}")
    # nothing half-visible: every live entry must be acknowledged or the
    # in-flight create with its exact inode
    for nb, ino in d.readdir():
        name = nb.decode("utf-8", "replace")
        if shadow.get(name) == ino:
            continue
        if pend_kind == "create" and pend_name == name and pending[2] == ino \
                and name not in shadow:
            continue
        failures.append(f"point {point}: unexpected live entry {name!r} -> {ino}")
    return failures


def crash_fuzz(spec: WorkloadSpec, *, max_points: int = 0) -> CrashFuzzReport:
    """Inject a crash at persist barriers and verify recovery each time.

    Tests every barrier point, or a seeded sample of ``max_points`` of
    them when there are more.
    """
    if spec.scheme != "cib":
        raise ValueError("crash fuzzing targets the cib scheme")
    ops = gen_workload(spec)
    # dry run to count barrier points
    region = PmRegion(region_capacity(spec))
    scheme = CibScheme(region)
    for op in ops:
        _execute(scheme, op)
    total = region.stats.barriers
    del region, scheme

    points = list(range(1, total + 1))
    if max_points and len(points) > max_points:
        points = sorted(random.Random(spec.seed).sample(points, max_points))
    failures: list[str] = []
    for p in points:
        image, shadow, pending = _replay_to_crash(spec, ops, p)
        failures.extend(_check_recovered(image, shadow, pending, p))
    return CrashFuzzReport(workload=spec.kind, n=spec.n_files,
                           total_barriers=total, points_tested=len(points),
                           failures=failures)


# -- report emission ------------------------------------------------------

def report_emit(reports: RunReport | list[RunReport], format: str = "table") -> str:
    if isinstance(reports, RunReport):
        reports = [reports]
    rows = [list(REPORT_COLUMNS)] + [r.row() for r in reports]
    if format == "csv":
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerows(rows)
        return out.getvalue()
    if format == "table":
        cells = [[str(c) for c in row] for row in rows]
        widths = [max(len(r[i]) for r in cells) for i in range(len(REPORT_COLUMNS))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip()
                 for row in cells]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {format!r}")
