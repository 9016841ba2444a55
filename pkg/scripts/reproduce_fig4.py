#!/usr/bin/env python3
"""Desk-scale reproduction of the failure-probability curves.

Sweeps the 8-bit multiplier over a p_gate grid for the unprotected
baseline, in-memory-voted TMR, and ideal-voted TMR, maps each estimate
through the network misclassification formula, and writes one combined
CSV. Direct Monte Carlo cannot reach the 1e-9 gate-error regime, so the
grid covers 1e-3..1e-4 where 2e4 trials resolve every point; the
analytic network model covers the rest.

Usage: python scripts/reproduce_fig4.py [outdir]
"""

import subprocess
import sys
from pathlib import Path

from pimrel.cli import main as pimrel_main

OUTDIR = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("artifacts")
RENDERER = Path(__file__).resolve().parent.parent / "figplots" / "render_fig4.py"


def run(argv):
    code = pimrel_main(argv)
    if code != 0:
        sys.exit(code)


def merge_data_rows(dst: Path, sources: list[Path]) -> None:
    lines: list[str] = []
    for i, src in enumerate(sources):
        for line in src.read_text().splitlines():
            if line.startswith("#"):
                if i == 0:
                    lines.append(line)
                continue
            if line.startswith("experiment,") and i > 0:
                continue
            lines.append(line)
    dst.write_text("\n".join(lines) + "\n")


def main() -> int:
    OUTDIR.mkdir(parents=True, exist_ok=True)
    sweep_csv = OUTDIR / "fig4_sweep.csv"
    nn_csv = OUTDIR / "fig4_nn.csv"
    combined = OUTDIR / "fig4.csv"

    run(
        [
            "tmr-sweep", "--bits", "8",
            "--p-gate", "1e-3,5e-4,3e-4,2e-4,1e-4",
            "--modes", "none,serial:min3,serial:ideal",
            "--trials", "20000", "--seed", "2718",
            "-o", str(sweep_csv),
        ]
    )
    run(["nn", "--from-csv", str(sweep_csv), "-o", str(nn_csv)])
    merge_data_rows(combined, [sweep_csv, nn_csv])
    print(f"wrote {combined}")

    png = OUTDIR / "fig4.png"
    result = subprocess.run([sys.executable, str(RENDERER), str(combined), str(png)])
    if result.returncode == 0:
        print(f"wrote {png}")
    return result.returncode


if __name__ == "__main__":
    sys.exit(main())
