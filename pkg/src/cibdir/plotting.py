"""Figure rendering for sweep reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .bench import RunReport  # noqa: E402

_STYLE = {"cib": "o-", "trad": "s--", "btree": "^:"}


def save_sweep_figure(reports: list[RunReport], path: str) -> None:
    """Render elapsed time and PM bytes versus n, one curve per scheme."""
    fig, (ax_t, ax_w) = plt.subplots(1, 2, figsize=(9, 3.6))
    schemes = sorted({r.scheme for r in reports})
    for scheme in schemes:
        pts = sorted((r.n, r.elapsed_s, r.pm_bytes)
                     for r in reports if r.scheme == scheme)
        ns = [p[0] for p in pts]
        ax_t.plot(ns, [p[1] for p in pts], _STYLE.get(scheme, "-"), label=scheme)
        ax_w.plot(ns, [p[2] for p in pts], _STYLE.get(scheme, "-"), label=scheme)
    for ax, ylabel in ((ax_t, "elapsed (s)"), (ax_w, "PM bytes written")):
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("files")
        ax.set_ylabel(ylabel)
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
