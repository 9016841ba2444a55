#!/usr/bin/env python3
"""Render failure-probability curves from a sweep CSV.

Usage: render_fig4.py <csv> <out.png>

Input is the experiment-report schema
(experiment,mode,voting,bit_width,p_gate,...,p_hat,...). Rows from
multiplication experiments (tmr-sweep, mult) go on a multiplication
failure panel; rows with experiment=nn go on a network failure panel
below it. Both axes are logarithmic; one series per (mode, voting);
points with a non-positive estimate cannot be drawn on a log axis and
are skipped with a warning. Exit codes: 0 ok, 1 empty input, 2 schema
mismatch.
"""

import csv
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

REQUIRED = {"experiment", "mode", "voting", "p_gate", "p_hat"}
MULT_EXPERIMENTS = {"tmr-sweep", "mult"}


def read_rows(path: str) -> list[dict]:
    with open(path) as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.startswith("#")]
    return list(csv.DictReader(lines))


def collect_series(rows: list[dict], experiments: set[str]) -> dict[str, list[tuple[float, float]]]:
    series: dict[str, list[tuple[float, float]]] = {}
    for row in rows:
        if row["experiment"] not in experiments:
            continue
        label = f"{row['mode']}/{row['voting']}" if row["voting"] else row["mode"]
        try:
            x = float(row["p_gate"])
            y = float(row["p_hat"])
        except (TypeError, ValueError):
            print(f"warning: skipping unparseable point in series {label!r}", file=sys.stderr)
            continue
        if x <= 0 or y <= 0:
            print(
                f"warning: skipping non-positive point ({x:g}, {y:g}) in series {label!r}",
                file=sys.stderr,
            )
            continue
        series.setdefault(label, []).append((x, y))
    return {k: sorted(v) for k, v in series.items() if v}


def render(csv_path: str, out_path: str) -> dict[str, dict[str, int]]:
    """Write the chart; returns {panel: {series label: point count}}."""
    rows = read_rows(csv_path)
    if not rows:
        raise SystemExit(f"error: no data rows in {csv_path}")
    missing = REQUIRED - set(rows[0])
    if missing:
        print(f"error: {csv_path} lacks columns {sorted(missing)}", file=sys.stderr)
        raise SystemExit(2)

    panels = {}
    mult = collect_series(rows, MULT_EXPERIMENTS)
    net = collect_series(rows, {"nn"})
    if mult:
        panels["multiplication"] = mult
    if net:
        panels["network"] = net
    if not panels:
        raise SystemExit(f"error: no plottable points in {csv_path}")

    fig, axes = plt.subplots(len(panels), 1, figsize=(6, 3.2 * len(panels)), squeeze=False)
    ylabels = {"multiplication": "multiplication failure", "network": "network failure"}
    for ax, (panel, series) in zip(axes[:, 0], panels.items()):
        for label, points in sorted(series.items()):
            xs, ys = zip(*points)
            ax.plot(xs, ys, marker="o", label=label)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_ylabel(ylabels[panel])
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=8)
    axes[-1, 0].set_xlabel("gate failure probability")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return {panel: {k: len(v) for k, v in series.items()} for panel, series in panels.items()}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 2:
        print(__doc__.strip(), file=sys.stderr)
        return 2
    counts = render(argv[0], argv[1])
    total = sum(len(s) for s in counts.values())
    print(f"wrote {argv[1]}: {total} series over {len(counts)} panel(s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
