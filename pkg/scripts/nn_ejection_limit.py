"""Nearest-neighbor traffic: analytic ejection limit versus measured saturation.

Each node picks one of its 2-4 mesh neighbours uniformly, so the load that
arrives at a node is r * sum(1/deg(n)) over its neighbours. The busiest
receiver bounds the sustainable injection rate. The measured limit of the
input-queued router sits below that bound because of head-of-line blocking
where four streams merge into one ejection port.
"""

import argparse
from fractions import Fraction

from bjmesh.packet import Coordinate
from bjmesh.sim.sweep import ExperimentPlan, find_saturation
from bjmesh.sim.traffic import neighbors


def ejection_bound(k: int) -> Fraction:
    worst = Fraction(0)
    for x in range(k):
        for y in range(k):
            load = sum(Fraction(1, len(neighbors(n, k, k))) for n in neighbors(Coordinate(x, y), k, k))
            worst = max(worst, load)
    return 1 / worst


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--k", type=int, default=8)
    ap.add_argument("--depths", type=int, nargs="+", default=[2, 4, 8])
    args = ap.parse_args()
    b = ejection_bound(args.k)
    print(f"{args.k}x{args.k} ejection bound: {float(b):.4f} ({b})")
    for d in args.depths:
        plan = ExperimentPlan(cols=args.k, rows=args.k, pattern="neighbor", router_fifo_depth=d)
        s = find_saturation(plan, 0.5, 1.0, tol=0.01)
        print(f"router FIFO depth {d}: saturates between {s.stable_rate:.3f} and {s.saturated_rate:.3f}")


if __name__ == "__main__":
    main()
