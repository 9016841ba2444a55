#!/usr/bin/env python3
"""Render expected weight corruption over time from a degradation CSV.

Usage: render_fig5.py <csv> <out.png>

Input is the degradation schema
(experiment,mode,p_input,batches,expected_corrupted,...). One log-log
curve per (mode, p_input); zero expectations cannot be drawn on a log
axis and are skipped with a warning. Exit codes: 0 ok, 1 empty input,
2 schema mismatch.
"""

import csv
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

REQUIRED = {"experiment", "mode", "p_input", "batches", "expected_corrupted"}


def read_rows(path: str) -> list[dict]:
    with open(path) as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.startswith("#")]
    return list(csv.DictReader(lines))


def collect_series(rows: list[dict]) -> dict[str, list[tuple[float, float]]]:
    series: dict[str, list[tuple[float, float]]] = {}
    for row in rows:
        if row["experiment"] != "degradation":
            continue
        label = f"{row['mode']} p_input={float(row['p_input']):g}"
        x = float(row["batches"])
        y = float(row["expected_corrupted"])
        if x <= 0 or y <= 0:
            print(
                f"warning: skipping non-positive point ({x:g}, {y:g}) in series {label!r}",
                file=sys.stderr,
            )
            continue
        series.setdefault(label, []).append((x, y))
    return {k: sorted(v) for k, v in series.items() if v}


def render(csv_path: str, out_path: str) -> dict[str, int]:
    """Write the chart; returns {series label: point count}."""
    rows = read_rows(csv_path)
    if not rows:
        raise SystemExit(f"error: no data rows in {csv_path}")
    missing = REQUIRED - set(rows[0])
    if missing:
        print(f"error: {csv_path} lacks columns {sorted(missing)}", file=sys.stderr)
        raise SystemExit(2)
    series = collect_series(rows)
    if not series:
        raise SystemExit(f"error: no plottable points in {csv_path}")

    fig, ax = plt.subplots(figsize=(6, 4))
    for label, points in sorted(series.items()):
        xs, ys = zip(*points)
        style = "--" if label.startswith("ecc") else "-"
        ax.plot(xs, ys, style, marker="o", markersize=3, label=label)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("time (batches)")
    ax.set_ylabel("expected corrupted weights")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return {k: len(v) for k, v in series.items()}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 2:
        print(__doc__.strip(), file=sys.stderr)
        return 2
    counts = render(argv[0], argv[1])
    print(f"wrote {argv[1]}: {len(counts)} series")
    return 0


if __name__ == "__main__":
    sys.exit(main())
