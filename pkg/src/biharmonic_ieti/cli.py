"""Command line driver for single runs and parameter studies.

Examples
--------
::

    biharmonic-ieti --domain quarter_annulus --degree 3 --refine 5
    biharmonic-ieti --study table --domain lamella --degree 2,3 --refine 3-6
    biharmonic-ieti --study convergence --degree 3 --refine 2-6
    biharmonic-ieti --study extension --out bounds.csv
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import extension_lab
from .assembly import assemble_all, classify_dofs, h2_seminorm_error, make_bases
from .domains import DEFAULT_SPLITS, builtin_domain, manufactured_solution, source_function
from .exceptions import IetiError
from .ieti import PRECONDITIONERS, IetiSystem, SolverConfig, monolithic_solve, relative_difference, solve_dual

DOMAINS = ("unit_square", "quarter_annulus", "lamella", "two_squares")
TIMING_KEYS = ("assembly_time", "factorization_time", "solve_time")


@dataclass
class RunConfig:
    """One discretization and solver setting."""

    domain: str = "quarter_annulus"
    splits: int | None = None
    degree: int = 2
    refine: int = 3
    precond: str = "scaled"
    tol: float = 1e-6
    max_iter: int = 500
    output: str = "json"
    oracle: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ValueError(f"domain must be one of {DOMAINS}")
        if self.splits is None:
            self.splits = DEFAULT_SPLITS[self.domain]
        if self.degree < 2:
            raise ValueError("degree must be at least 2")
        if self.refine < 1:
            raise ValueError("refine must be at least 1")
        if self.precond not in PRECONDITIONERS:
            raise ValueError(f"precond must be one of {PRECONDITIONERS}")
        if self.output not in ("json", "csv"):
            raise ValueError("output must be json or csv")


@dataclass
class RunResult:
    """Statistics of one run; flat so that it serializes to one JSON object."""

    config: dict
    n_dofs: int
    n_multipliers: int
    n_primal: int
    iterations: int
    kappa: float
    residual: float
    converged: bool
    assembly_time: float = 0.0
    factorization_time: float = 0.0
    solve_time: float = 0.0
    oracle_difference: float | None = None
    h2_error: float | None = None
    error: str | None = None
    coefficients: list | None = field(default=None, repr=False)

    def to_dict(self, timings: bool = False) -> dict:
        d = asdict(self)
        d.pop("coefficients")
        if not timings:
            for k in TIMING_KEYS:
                d.pop(k)
        return d


def run(config: RunConfig) -> RunResult:
    """Assemble, solve by IETI-DP and optionally compare with a direct solve."""
    mp = builtin_domain(config.domain, config.splits)
    source = source_function(config.domain)
    t0 = time.perf_counter()
    bases = make_bases(mp, config.degree, config.refine)
    systems = assemble_all(mp, bases, source)
    dofs = classify_dofs(mp, bases)
    t1 = time.perf_counter()
    scfg = SolverConfig(precond=config.precond, tol=config.tol, max_iter=config.max_iter, raise_on_fail=False)
    system = IetiSystem(mp, bases, systems, dofs=dofs, config=scfg)
    t2 = time.perf_counter()
    res = solve_dual(system)
    coeffs = system.recover(res.x)
    t3 = time.perf_counter()
    hist = res.residual_history
    rel = float(hist[-1] / hist[0]) if hist and hist[0] > 0 else 0.0
    out = RunResult(
        config=asdict(config), n_dofs=system.n_dofs, n_multipliers=system.n_lam, n_primal=system.n_primal,
        iterations=res.iterations, kappa=float(res.kappa_estimate), residual=rel, converged=bool(res.converged),
        assembly_time=t1 - t0, factorization_time=t2 - t1, solve_time=t3 - t2, coefficients=coeffs)
    if config.oracle:
        out.oracle_difference = relative_difference(coeffs, monolithic_solve(mp, bases, systems, dofs))
    if config.domain == "unit_square":
        out.h2_error = h2_seminorm_error(mp, bases, coeffs, lambda x, y: manufactured_solution(x, y)[2])
    return out


def _run_cell(config: RunConfig) -> RunResult:
    try:
        return run(config)
    except (IetiError, np.linalg.LinAlgError) as exc:
        return RunResult(asdict(config), 0, 0, 0, 0, float("nan"), float("nan"), False,
                         error=f"{type(exc).__name__}: {exc}")


def max_workers(jobs: int) -> int:
    cap = os.environ.get("BIHARMONIC_IETI_THREADS")
    n = max(1, int(jobs))
    if cap:
        n = min(n, max(1, int(cap)))
    return n


def run_many(configs, jobs: int = 1) -> list:
    """Run independent cells, results in input order."""
    n = max_workers(jobs)
    if n == 1 or len(configs) <= 1:
        return [_run_cell(c) for c in configs]
    with ProcessPoolExecutor(max_workers=n) as ex:
        return list(ex.map(_run_cell, configs))


def table_study(domain: str, splits, p_list, r_list, precond: str = "scaled", tol: float = 1e-6,
                max_iter: int = 500, jobs: int = 1) -> list:
    """Grid of runs over degrees and refinements; returns RunResults row-major in ``r``."""
    configs = [RunConfig(domain, splits, p, r, precond, tol, max_iter) for r in r_list for p in p_list]
    return run_many(configs, jobs)


def table_csv(results, p_list, r_list) -> str:
    """Table layout: one row per ``r`` with ``kappa``/``it`` columns per ``p``.

    Failed cells are marked ``ERR``, cells that did not converge get a
    trailing ``*`` on the iteration count.
    """
    cells = {(res.config["degree"], res.config["refine"]): res for res in results}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["r"] + [f"{k}_p{p}" for p in p_list for k in ("kappa", "it")])
    for r in r_list:
        row = [r]
        for p in p_list:
            c = cells.get((p, r))
            if c is None or c.error:
                row += ["ERR", "ERR"]
            else:
                row += [f"{c.kappa:.2f}", f"{c.iterations}" + ("" if c.converged else "*")]
        w.writerow(row)
    return buf.getvalue()


def convergence_study(p: int, r_list, splits: int = 2, jobs: int = 1) -> list:
    """H^2 seminorm errors for the manufactured solution on the unit square.

    Returns dicts with keys ``r, dofs, h2_error, rate``; ``rate`` is the
    observed order against the previous row.
    """
    if p < 2:
        raise ValueError("degree must be at least 2")
    results = run_many([RunConfig("unit_square", splits, p, r) for r in r_list], jobs)
    rows, prev = [], None
    for r, res in zip(r_list, results):
        if res.error:
            raise IetiError(res.error)
        rate = None
        if prev is not None:
            rate = float(np.log2(prev[1] / res.h2_error) / (r - prev[0]))
        rows.append({"r": r, "dofs": res.n_dofs, "h2_error": res.h2_error, "rate": rate})
        prev = (r, res.h2_error)
    return rows


def extension_study(p_list=(2, 3, 4), r_list=(3, 4, 5, 6), samples: int = 30, seed: int = 0) -> list:
    rows = []
    for alpha in (0, 1):
        rows += extension_lab.verify_bound(alpha, p_list, r_list, samples, seed)
    return rows


def int_list(text: str) -> list:
    """Parse ``"3"``, ``"2,3,4"`` or ``"3-6"``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            a, b = part.split("-")
            out += list(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError(f"empty integer list {text!r}")
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="biharmonic-ieti", description=__doc__.splitlines()[0])
    ap.add_argument("--domain", choices=DOMAINS, default="quarter_annulus")
    ap.add_argument("--splits", type=int, default=None, help="patch splits per base patch")
    ap.add_argument("--degree", type=int_list, default=None,
                    help="degree(s), e.g. 2 or 2,3 or 2-4 (default 2; 2-4 for the extension study)")
    ap.add_argument("--refine", type=int_list, default=None,
                    help="refinement level(s) (default 3; 3-6 for the extension study)")
    ap.add_argument("--precond", choices=PRECONDITIONERS, default="scaled")
    ap.add_argument("--tol", type=float, default=1e-6)
    ap.add_argument("--max-iter", type=int, default=500)
    ap.add_argument("--output", choices=("json", "csv"), default="json")
    ap.add_argument("--oracle", action="store_true", help="compare with a monolithic direct solve")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--study", choices=("table", "convergence", "extension"), default=None)
    ap.add_argument("--samples", type=int, default=30, help="random traces per cell (extension study)")
    ap.add_argument("--timings", action="store_true", help="include wall times in JSON output")
    ap.add_argument("--out", default=None, help="output path (default stdout)")
    return ap


def _rows_csv(rows, fields) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    extension = args.study == "extension"
    degrees = args.degree or ([2, 3, 4] if extension else [2])
    levels = args.refine or ([3, 4, 5, 6] if extension else [3])
    ok = True
    try:
        if args.study == "extension":
            rows = extension_study(tuple(degrees), tuple(levels), args.samples, args.seed)
            if args.output == "json":
                text = json.dumps(rows, indent=1) + "\n"
            else:
                buf = io.StringIO()
                extension_lab.write_report(rows, buf)
                text = buf.getvalue()
        elif args.study == "convergence":
            rows = []
            for p in degrees:
                rows += [dict(p=p, **row) for row in convergence_study(p, levels, args.splits or 2, args.jobs)]
            text = (json.dumps(rows, indent=1) + "\n" if args.output == "json"
                    else _rows_csv(rows, ["p", "r", "dofs", "h2_error", "rate"]))
        else:
            configs = [RunConfig(args.domain, args.splits, p, r, args.precond, args.tol, args.max_iter,
                                 args.output, args.oracle, args.seed)
                       for r in levels for p in degrees]
            results = run_many(configs, args.jobs)
            ok = all(res.converged and not res.error for res in results)
            if args.study == "table" and args.output == "csv":
                text = table_csv(results, degrees, levels)
            elif args.output == "csv":
                dicts = [res.to_dict(args.timings) for res in results]
                for d in dicts:
                    d.update(d.pop("config"))
                text = _rows_csv(dicts, list(dicts[0]))
            else:
                dicts = [res.to_dict(args.timings) for res in results]
                text = json.dumps(dicts[0] if len(dicts) == 1 else dicts, indent=1) + "\n"
    except (IetiError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
