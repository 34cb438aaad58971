#!/usr/bin/env python3
"""Empirical constants of the multilevel trace extension.

Prints the largest ratio ``|E_alpha w|^2_{H^2} / RHS`` per (p, r) for both
extensions, the log-slope against r, and the per-eigenvector worst case.

    python scripts/extension_bounds.py --out results/extension_bounds.csv
"""
import argparse

import numpy as np

from biharmonic_ieti.cli import int_list
from biharmonic_ieti.extension_lab import (BucketPlan, TraceSpace, bound_rhs, extend, log_ratio_slope,
                                           verify_bound, write_report)
from biharmonic_ieti.splines import KnotVector


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--degrees", type=int_list, default=[2, 3, 4])
    ap.add_argument("--levels", type=int_list, default=[3, 4, 5, 6])
    ap.add_argument("--samples", type=int, default=30)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    rows = []
    for alpha in (0, 1):
        part = verify_bound(alpha, args.degrees, args.levels, args.samples, args.seed)
        rows += part
        print(f"alpha={alpha}: max ratio {max(r['max_ratio'] for r in part):.3f}, "
              f"worst log-slope in r {log_ratio_slope(part):.3f}")
    print("\nworst single eigenvector (alpha, p, r, ratio, frequency / (p/h))")
    for alpha in (0, 1):
        for p in args.degrees:
            for r in args.levels:
                kv = KnotVector.uniform(p, r)
                ts, plan = TraceSpace(kv), BucketPlan(kv)
                rat = [extend(ts, plan, ts.vecs[:, i], alpha).h2_seminorm2()
                       / bound_rhs(ts, plan, ts.vecs[:, i], alpha) for i in range(ts.dim)]
                i = int(np.argmax(rat))
                print(f"{alpha} {p} {r} {rat[i]:.3f} {ts.lam[i] * plan.h / p:.2f}")
    if args.out:
        write_report(rows, args.out)


if __name__ == "__main__":
    main()
