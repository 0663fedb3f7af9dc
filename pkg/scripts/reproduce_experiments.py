"""Run every experiment and write CSVs plus manifests under one directory.

    python3 scripts/reproduce_experiments.py --outdir results [--quick]

``--quick`` shrinks the Monte Carlo budgets for a smoke run.
"""

import argparse
import sys
from pathlib import Path

from sopot_fbmc.cli import dispatch


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--outdir", default="results")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quick", action="store_true")
    args = p.parse_args(argv)
    out = Path(args.outdir)
    seed = ["--seed", str(args.seed)]
    ber_budget = ["--max-bits", "200000"] if args.quick else []
    runs = [
        ["filter", "-o", str(out / "phydyas.csv")] + seed,
        ["sweep-mse", "--grid", "matched", "--outdir", str(out / "mse_matched")] + seed,
        ["sweep-mse", "--outdir", str(out / "mse_grid")] + seed,
        ["sweep-interference", "--grid", "matched", "--outdir", str(out / "interference")] + seed,
        ["psd", "--frames", "10" if args.quick else "100", "--outdir", str(out / "psd")] + seed,
        ["ber", "--order", "4", "--outdir", str(out / "ber_qam4")] + seed + ber_budget,
        ["ber", "--order", "64", "--outdir", str(out / "ber_qam64")] + seed + ber_budget,
    ]
    for run in runs:
        print("sopot-fbmc", " ".join(run), flush=True)
        rc = dispatch(run)
        if rc:
            return rc
    return 0


if __name__ == "__main__":
    sys.exit(main())
