#!/usr/bin/env python3
"""Expected weight corruption over time, with and without diagonal ECC.

Evaluates the closed-form degradation model over a batch-count grid of
1e3..1e9 for three per-access corruption probabilities, then renders the
log-log chart.

Usage: python scripts/reproduce_fig5.py [outdir]
"""

import subprocess
import sys
from pathlib import Path

from pimrel.cli import main as pimrel_main

OUTDIR = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("artifacts")
RENDERER = Path(__file__).resolve().parent.parent / "figplots" / "render_fig5.py"


def main() -> int:
    OUTDIR.mkdir(parents=True, exist_ok=True)
    out_csv = OUTDIR / "fig5.csv"
    code = pimrel_main(
        [
            "degradation",
            "--p-input", "1e-7,1e-8,1e-9",
            "--batches", "1e3,1e4,1e5,1e6,1e7,1e8,1e9",
            "--ecc", "both",
            "-o", str(out_csv),
        ]
    )
    if code != 0:
        return code
    print(f"wrote {out_csv}")

    png = OUTDIR / "fig5.png"
    result = subprocess.run([sys.executable, str(RENDERER), str(out_csv), str(png)])
    if result.returncode == 0:
        print(f"wrote {png}")
    return result.returncode


if __name__ == "__main__":
    sys.exit(main())
