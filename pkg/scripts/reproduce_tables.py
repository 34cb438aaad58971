#!/usr/bin/env python3
"""Recompute the condition number / iteration tables and compare with the fixtures.

Writes one CSV per table (table layout: rows r, kappa/it per p) and prints a
side-by-side comparison ``ours / reference``.

    python scripts/reproduce_tables.py --tables 1 4 --degrees 2-4 --levels 3-5
"""
import argparse
import csv
from importlib.resources import files
from pathlib import Path

from biharmonic_ieti.cli import int_list, table_csv, table_study

TABLES = {
    1: ("table1_annulus16_scaled", "quarter_annulus", 4, "scaled"),
    2: ("table2_annulus64_scaled", "quarter_annulus", 8, "scaled"),
    3: ("table3_lamella32_scaled", "lamella", 2, "scaled"),
    4: ("table4_annulus16_modified", "quarter_annulus", 4, "modified"),
    5: ("table5_annulus64_modified", "quarter_annulus", 8, "modified"),
    6: ("table6_lamella32_modified", "lamella", 2, "modified"),
}


def reference(name):
    text = (files("biharmonic_ieti") / "data" / f"{name}.csv").read_text()
    return {int(row["r"]): row for row in csv.DictReader(text.splitlines())}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tables", type=int, nargs="+", default=[1, 3, 4, 6], choices=sorted(TABLES))
    ap.add_argument("--degrees", type=int_list, default=[2, 3, 4])
    ap.add_argument("--levels", type=int_list, default=[3, 4, 5])
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--outdir", default="results")
    args = ap.parse_args()
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    for t in args.tables:
        name, domain, splits, precond = TABLES[t]
        results = table_study(domain, splits, args.degrees, args.levels, precond, jobs=args.jobs)
        (out / f"{name}.csv").write_text(table_csv(results, args.degrees, args.levels))
        ref = reference(name)
        cells = {(r.config["degree"], r.config["refine"]): r for r in results}
        print(f"\n{name} ({domain}, {splits}x{splits} split, {precond}); kappa/it ours | reference")
        print("r  " + "".join(f"{'p=' + str(p):>26}" for p in args.degrees))
        for r in args.levels:
            line = f"{r:<3}"
            for p in args.degrees:
                c = cells[(p, r)]
                ours = "ERR" if c.error else f"{c.kappa:6.2f}/{c.iterations:<3}"
                theirs = f"{ref[r][f'kappa_p{p}']}/{ref[r][f'it_p{p}']}" if r in ref and p <= 6 else "-"
                line += f"{ours + ' | ' + theirs:>26}"
            print(line)


if __name__ == "__main__":
    main()
