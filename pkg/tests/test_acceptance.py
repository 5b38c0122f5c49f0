"""Acceptance suite: one test per release criterion.

Each test prints a single [PASS]/[FAIL] line (with capture disabled so
it reaches the terminal) and then asserts. Expensive
artifacts — the create-n sweep and a 10^5-file directory — are built
once per session and shared.
"""

import math
import subprocess
import sys

import pytest

from cibdir.bench import crash_fuzz, run
from cibdir.cib import CibDir
from cibdir.pm import PmRegion
from cibdir.workload import WorkloadSpec, files_for_ops

BIG_N = 100_000
SWEEP_NS = (1_000, 10_000, 50_000, 100_000)


@pytest.fixture
def verdict(capfd):
    """Emit one [PASS]/[FAIL] line per criterion past pytest's capture."""
    def emit(num: int, ok: bool, detail: str) -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {detail}"
        with capfd.disabled():
            print(line, flush=True)
        assert ok, line
    return emit


@pytest.fixture(scope="session")
def sweep_reports():
    """create-n runs for trad and cib across the sweep sizes."""
    reports = {}
    for scheme in ("trad", "cib"):
        for n in SWEEP_NS:
            spec = WorkloadSpec(kind="create-n", n_files=n, seed=0, scheme=scheme)
            reports[scheme, n] = run(spec)
    return reports


@pytest.fixture(scope="session")
def big_dir(tmp_path_factory):
    """A 10^5-file directory plus its saved image path."""
    spec = WorkloadSpec(kind="create-n", n_files=BIG_N, scheme="cib")
    from cibdir.bench import region_capacity
    region = PmRegion(region_capacity(spec))
    d = CibDir.new(region)
    for i in range(BIG_N):
        d.create(f"f{i:08d}", i + 1)
    path = tmp_path_factory.mktemp("image") / "big.img"
    region.save(path)
    return region, d, path


class TestCriterion1:
    def test_oracle_equivalence_100_seeds(self, verdict):
        n = files_for_ops("mixed-webproxy", 10_000)
        for seed in range(100):
            for scheme in ("cib", "trad", "btree"):
                # run() raises OracleMismatch on any disagreement
                run(WorkloadSpec(kind="mixed-webproxy", n_files=n, seed=seed,
                                 scheme=scheme))
        verdict(1, True,
                "oracle equivalence over 100 seeds x 3 schemes x ~10^4 mixed ops")


class TestCriterion2:
    def test_speedup_trend(self, sweep_reports, verdict):
        ratios = [sweep_reports["trad", n].elapsed_s
                  / sweep_reports["cib", n].elapsed_s for n in SWEEP_NS]
        monotone = all(b > a for a, b in zip(ratios, ratios[1:]))
        floor = ratios[-1] >= 10
        verdict(2, monotone and floor,
                "trad/cib elapsed ratios "
                + ", ".join(f"{r:.1f}x@{n}" for r, n in zip(ratios, SWEEP_NS))
                + " (monotone, >=10x at 10^5)")


class TestCriterion3:
    def test_delete_costs_eight_bytes(self, verdict):
        region = PmRegion(1 << 26)
        d = CibDir.new(region)
        for i in range(10_000):
            d.create(f"del{i:06d}", i + 1)
        bad = 0
        for i in range(10_000):
            base = region.stats.snapshot()
            d.delete(f"del{i:06d}")
            if region.stats.delta(base).bytes_written != 8:
                bad += 1
        verdict(3, bad == 0, f"10^4 deletes each wrote exactly 8 bytes "
                             f"({bad} violations)")


class TestCriterion4:
    def test_pm_write_reduction(self, sweep_reports, verdict):
        cib = sweep_reports["cib", BIG_N].pm_bytes
        spec = WorkloadSpec(kind="create-n", n_files=BIG_N, seed=0, scheme="btree")
        shadowed = run(spec, btree_shadowing=True).pm_bytes
        inplace = run(spec, btree_shadowing=False).pm_bytes
        r_shadow, r_inplace = shadowed / cib, inplace / cib
        verdict(4, r_shadow >= 10 and r_inplace >= 3,
                f"btree/cib pm_bytes at 10^5: {r_shadow:.1f}x shadowed (>=10), "
                f"{r_inplace:.1f}x in-place (>=3)")


class TestCriterion5:
    def test_insert_timing_direction_at_1e6(self, verdict):
        cib = run(WorkloadSpec(kind="create-n", n_files=1_000_000, scheme="cib"))
        btree = run(WorkloadSpec(kind="create-n", n_files=1_000_000,
                                 scheme="btree"))
        verdict(5, cib.elapsed_s < btree.elapsed_s,
                f"10^6 inserts: cib {cib.elapsed_s:.1f}s < "
                f"btree {btree.elapsed_s:.1f}s")


class TestCriterion6:
    def test_probe_bound(self, big_dir, verdict):
        _, d, _ = big_dir
        d.probe_hist.clear()
        for i in range(BIG_N):
            d.lookup(f"f{i:08d}")
        bound = math.ceil(math.log2(d.block_count)) + 1
        verdict(6, d.max_probes <= bound,
                f"max {d.max_probes} probes over 10^5 lookups, bound "
                f"ceil(log2({d.block_count}))+1 = {bound}")


class TestCriterion7:
    def test_crash_safety(self, verdict):
        exhaustive = crash_fuzz(
            WorkloadSpec(kind="create-n", n_files=169, seed=0, scheme="cib"))
        n = files_for_ops("crash-fuzz", 10_000)
        sampled = crash_fuzz(
            WorkloadSpec(kind="crash-fuzz", n_files=n, seed=0, scheme="cib"),
            max_points=1000)
        ok = exhaustive.ok and sampled.ok
        verdict(7, ok,
                f"crash fuzz: {exhaustive.points_tested} exhaustive + "
                f"{sampled.points_tested} sampled points, "
                f"{len(exhaustive.failures) + len(sampled.failures)} failures")


class TestCriterion8:
    def test_lookup_and_readdir_purity(self, big_dir, verdict):
        region, d, _ = big_dir
        base = region.stats.snapshot()
        for i in range(10_000):
            d.lookup(f"f{i:08d}")
        entries = sum(1 for _ in d.readdir())
        delta = region.stats.delta(base)
        verdict(8, delta.bytes_written == 0 and entries == BIG_N,
                f"10^4 lookups + full readdir wrote {delta.bytes_written} bytes")


class TestCriterion9:
    def test_layout_stability_across_processes(self, big_dir, verdict):
        _, _, path = big_dir
        script = (
            "import sys\n"
            "from cibdir.cib import CibDir, check_invariants\n"
            "from cibdir.pm import PmRegion\n"
            "r = PmRegion.load(sys.argv[1])\n"
            "d = CibDir.open(r)\n"
            f"assert all(d.lookup(f'f{{i:08d}}') == i + 1 for i in range({BIG_N}))\n"
            f"assert check_invariants(d, verify_hashes=True) == {BIG_N}\n"
            "print('resolved-ok')\n"
        )
        proc = subprocess.run([sys.executable, "-c", script, str(path)],
                              capture_output=True, text=True)
        ok = proc.returncode == 0 and "resolved-ok" in proc.stdout
        verdict(9, ok, f"fresh process reopened the image and resolved all "
                       f"10^5 names ({proc.stderr.strip() or 'no errors'})")
