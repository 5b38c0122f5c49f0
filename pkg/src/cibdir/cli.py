"""Command-line benchmark harness.

    bench run --scheme cib --workload create-n --n 10000 --seed 1 --format table
    bench crash-fuzz --n 169 --seed 1 [--max-points P]
    bench sweep --workload create-n --schemes all [--out sweep.csv] [--fig sweep.png]

Exit status is nonzero on any oracle or invariant failure. The region
capacity is sized from the workload; BENCH_REGION_BYTES overrides it.
"""

from __future__ import annotations

import sys

import click

from .bench import crash_fuzz, report_emit, run
from .errors import CibError
from .workload import KINDS, SCHEMES, WorkloadSpec

DEFAULT_SWEEP_NS = (1_000, 10_000, 50_000, 100_000)


@click.group()
def main() -> None:
    """Directory-index benchmarks over simulated persistent memory."""


@main.command("run")
@click.option("--scheme", type=click.Choice(SCHEMES), default="cib")
@click.option("--workload", type=click.Choice([k for k in KINDS if k != "crash-fuzz"]),
              default="create-n")
@click.option("--n", "n_files", type=int, default=10_000, help="number of files")
@click.option("--seed", type=int, default=0)
@click.option("--format", "fmt", type=click.Choice(["csv", "table"]), default="table")
@click.option("--no-btree-shadowing", is_flag=True,
              help="disable copy-on-write consistency in the B+-tree baseline")
def cmd_run(scheme, workload, n_files, seed, fmt, no_btree_shadowing) -> None:
    """Run one workload on one scheme with inline oracle verification."""
    spec = WorkloadSpec(kind=workload, n_files=n_files, seed=seed, scheme=scheme)
    try:
        report = run(spec, btree_shadowing=not no_btree_shadowing)
    except CibError as exc:
        click.echo(f"FAILED: {exc}", err=True)
        sys.exit(1)
    click.echo(report_emit(report, fmt), nl=False)


@main.command("crash-fuzz")
@click.option("--n", "n_files", type=int, default=169, help="number of files")
@click.option("--workload", type=click.Choice(["create-n", "mixed-webproxy",
                                               "mixed-varmail", "delete-n"]),
              default="create-n")
@click.option("--seed", type=int, default=0)
@click.option("--max-points", type=int, default=0,
              help="sample at most this many crash points (0 = exhaustive)")
def cmd_crash_fuzz(n_files, workload, seed, max_points) -> None:
    """Inject crashes at persist barriers and verify recovery at each point."""
    spec = WorkloadSpec(kind=workload, n_files=n_files, seed=seed, scheme="cib")
    report = crash_fuzz(spec, max_points=max_points)
    click.echo(f"barriers: {report.total_barriers}  points tested: "
               f"{report.points_tested}  failures: {len(report.failures)}")
    for line in report.failures[:50]:
        click.echo(f"  {line}", err=True)
    if not report.ok:
        sys.exit(1)


@main.command("sweep")
@click.option("--workload", type=click.Choice(["create-n", "lookup-n", "delete-n",
                                               "mixed-webproxy", "mixed-varmail"]),
              default="create-n")
@click.option("--schemes", default="all", help='comma list or "all"')
@click.option("--ns", default=",".join(str(n) for n in DEFAULT_SWEEP_NS),
              help="comma list of file counts")
@click.option("--seed", type=int, default=0)
@click.option("--format", "fmt", type=click.Choice(["csv", "table"]), default="table")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="write CSV here as well")
@click.option("--fig", type=click.Path(dir_okay=False), default=None,
              help="render a comparison figure to this file")
def cmd_sweep(workload, schemes, ns, seed, fmt, out, fig) -> None:
    """Run a scheme-by-n comparison grid."""
    scheme_list = list(SCHEMES) if schemes == "all" else schemes.split(",")
    for s in scheme_list:
        if s not in SCHEMES:
            raise click.BadParameter(f"unknown scheme {s!r}")
    n_list = [int(x) for x in ns.split(",")]
    reports = []
    try:
        for scheme in scheme_list:
            for n in n_list:
                spec = WorkloadSpec(kind=workload, n_files=n, seed=seed, scheme=scheme)
                reports.append(run(spec))
    except CibError as exc:
        click.echo(f"FAILED: {exc}", err=True)
        sys.exit(1)
    click.echo(report_emit(reports, fmt), nl=False)
    if out:
        with open(out, "w") as fh:
            fh.write(report_emit(reports, "csv"))
        if fig is None:
            fig = out.rsplit(".", 1)[0] + ".png"
    if fig:
        from .plotting import save_sweep_figure
        save_sweep_figure(reports, fig)
        click.echo(f"figure written to {fig}", err=True)


if __name__ == "__main__":
    main()
