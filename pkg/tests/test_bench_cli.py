import csv
import io
import os

import pytest
from click.testing import CliRunner

from cibdir.bench import REPORT_COLUMNS, region_capacity, report_emit, run
from cibdir.cli import main
from cibdir.workload import WorkloadSpec


@pytest.fixture(scope="module")
def small_report():
    return run(WorkloadSpec(kind="mixed-webproxy", n_files=200, seed=1,
                            scheme="cib"))


class TestRun:
    def test_all_schemes_pass_the_inline_oracle(self):
        for scheme in ("cib", "trad", "btree"):
            rep = run(WorkloadSpec(kind="mixed-varmail", n_files=150, seed=2,
                                   scheme=scheme))
            assert rep.scheme == scheme
            assert rep.ops == len(
                __import__("cibdir.workload", fromlist=["gen_workload"])
                .gen_workload(WorkloadSpec(kind="mixed-varmail", n_files=150,
                                           seed=2, scheme=scheme)))

    def test_report_fields_are_sane(self, small_report):
        r = small_report
        assert r.ops == 2400
        assert r.pm_bytes > 0 and r.pm_words > 0 and r.barriers > 0
        assert r.elapsed_s > 0
        assert r.max_probes >= 1


class TestReportEmit:
    def test_csv_round_trips(self, small_report):
        text = report_emit(small_report, "csv")
        rows = list(csv.reader(io.StringIO(text)))
        assert rows[0] == list(REPORT_COLUMNS)
        assert len(rows) == 2
        row = dict(zip(rows[0], rows[1]))
        assert row["scheme"] == "cib"
        assert int(row["pm_bytes"]) == small_report.pm_bytes

    def test_table_and_csv_carry_the_same_cells(self, small_report):
        table = report_emit(small_report, "table").splitlines()
        csv_cells = list(csv.reader(io.StringIO(report_emit(small_report, "csv"))))
        for line, cells in zip(table, csv_cells):
            assert line.split() == [c for c in cells if c]

    def test_unknown_format_rejected(self, small_report):
        with pytest.raises(ValueError):
            report_emit(small_report, "yaml")


class TestRegionCapacity:
    def test_env_override_wins(self, monkeypatch):
        monkeypatch.setenv("BENCH_REGION_BYTES", str(123 << 20))
        spec = WorkloadSpec(kind="create-n", n_files=10, scheme="cib")
        assert region_capacity(spec) == 123 << 20
        monkeypatch.delenv("BENCH_REGION_BYTES")
        assert region_capacity(spec) != 123 << 20

    def test_scales_with_n(self):
        small = region_capacity(WorkloadSpec(kind="create-n", n_files=1000))
        big = region_capacity(WorkloadSpec(kind="create-n", n_files=100_000))
        assert big > small


class TestCli:
    def test_run_table(self):
        res = CliRunner().invoke(main, ["run", "--scheme", "cib", "--workload",
                                        "create-n", "--n", "300", "--seed", "1"])
        assert res.exit_code == 0, res.output
        lines = res.output.splitlines()
        assert lines[0].split() == list(REPORT_COLUMNS)
        assert len(lines) == 2

    def test_run_csv(self):
        res = CliRunner().invoke(main, ["run", "--scheme", "trad", "--n", "200",
                                        "--format", "csv"])
        assert res.exit_code == 0, res.output
        rows = list(csv.reader(io.StringIO(res.output)))
        assert rows[0] == list(REPORT_COLUMNS)

    def test_run_btree_without_shadowing(self):
        res = CliRunner().invoke(main, ["run", "--scheme", "btree", "--n", "200",
                                        "--no-btree-shadowing", "--format", "csv"])
        assert res.exit_code == 0, res.output

    def test_crash_fuzz_command(self):
        res = CliRunner().invoke(main, ["crash-fuzz", "--n", "30", "--seed", "2",
                                        "--max-points", "40"])
        assert res.exit_code == 0, res.output
        assert "failures: 0" in res.output

    def test_sweep_writes_csv_and_figure(self, tmp_path):
        out = tmp_path / "sweep.csv"
        res = CliRunner().invoke(main, [
            "sweep", "--workload", "create-n", "--schemes", "cib,trad",
            "--ns", "200,400", "--out", str(out)])
        assert res.exit_code == 0, res.output
        rows = list(csv.reader(out.open()))
        assert rows[0] == list(REPORT_COLUMNS)
        assert len(rows) == 5  # header + 2 schemes x 2 sizes
        fig = tmp_path / "sweep.png"
        assert fig.exists() and fig.stat().st_size > 0
        assert fig.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_sweep_rejects_unknown_scheme(self):
        res = CliRunner().invoke(main, ["sweep", "--schemes", "xyz",
                                        "--ns", "100"])
        assert res.exit_code != 0
