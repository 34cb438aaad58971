#!/usr/bin/env python3
"""H^2 seminorm convergence for the manufactured solution on the unit square.

    python scripts/convergence.py --degrees 2-4 --levels 2-6
"""
import argparse

from biharmonic_ieti.cli import int_list, convergence_study


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--degrees", type=int_list, default=[2, 3, 4])
    ap.add_argument("--levels", type=int_list, default=[2, 3, 4, 5, 6])
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    print("p,r,dofs,h2_error,rate")
    for p in args.degrees:
        for row in convergence_study(p, args.levels, jobs=args.jobs):
            rate = "" if row["rate"] is None else f"{row['rate']:.3f}"
            print(f"{p},{row['r']},{row['dofs']},{row['h2_error']:.6e},{rate}")


if __name__ == "__main__":
    main()
