"""Two-router read-back example: prints the monitor lines and the timing."""

import argparse

from bjmesh.sim.scenarios import run_golden


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=3)
    ap.add_argument("--fifo-els", type=int, default=4)
    args = ap.parse_args()
    master = run_golden(args.n, fifo_els=args.fifo_els)
    print("\n".join(master.log))
    print("errors:", master.errors or "none")


if __name__ == "__main__":
    main()
