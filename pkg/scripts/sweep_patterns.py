"""Latency-vs-offered-load curves for all three patterns on one mesh size.

Writes one CSV per pattern into --outdir and prints the bisected saturation
rate of each, raw and normalized to the uniform bisection bound.

    python3 scripts/sweep_patterns.py --k 8 --outdir results/
"""

import argparse
import csv
from pathlib import Path

from bjmesh.sim.analysis import bisection_bound
from bjmesh.sim.sweep import CSV_COLUMNS, ExperimentPlan, find_saturation, run_sweep

GRIDS = {
    "uniform": [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4],
    "transpose": [0.05, 0.1, 0.15, 0.2, 0.25, 0.3],
    "neighbor": [0.2, 0.4, 0.6, 0.7, 0.8, 0.9, 1.0],
}


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--k", type=int, default=8)
    ap.add_argument("--seeds", type=int, nargs="+", default=[1])
    ap.add_argument("--outdir", type=Path, default=Path("results"))
    ap.add_argument("--router-fifo-depth", type=int, default=2)
    args = ap.parse_args()
    args.outdir.mkdir(parents=True, exist_ok=True)
    norm = min(bisection_bound(args.k), 1.0)
    for pattern, rates in GRIDS.items():
        plan = ExperimentPlan(
            cols=args.k, rows=args.k, pattern=pattern, rates=rates, seeds=args.seeds,
            router_fifo_depth=args.router_fifo_depth, stop_after=2,
        )
        points = run_sweep(plan)
        path = args.outdir / f"{pattern}_{args.k}x{args.k}.csv"
        with path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
            w.writeheader()
            for p in points:
                w.writerow(p.row())
        stable = [p.offered for p in points if not p.saturated]
        hot = [p.offered for p in points if p.saturated]
        if stable and hot:
            s = find_saturation(plan, max(stable), min(hot), tol=0.01)
            print(f"{pattern:10s} saturates at {s.estimate:.3f} (normalized {s.estimate / norm:.3f})  -> {path}")
        else:
            print(f"{pattern:10s} no saturation bracket in {rates}  -> {path}")


if __name__ == "__main__":
    main()
