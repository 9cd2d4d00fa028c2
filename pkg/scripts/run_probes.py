"""Run every geodesic probe on the built-in models and print a margin table.

Usage: python scripts/run_probes.py [--out margins.csv] [--grid 32x16]
"""

import argparse
import csv
import time

import numpy as np

from contact_radius import lab
from contact_radius.bounds import radius_bounds
from contact_radius.models import get_model, model_bound_inputs

# (model, probe, radius); radii stay inside each model's proven or chart-safe range
RUNS = [
    ("round-s3", "twisting", 0.5),
    ("heisenberg3", "twisting", 0.3),
    ("heisenberg5", "twisting", 0.3),
    ("round-s3", "jacobi", 0.5),
    ("heisenberg3", "jacobi", 0.3),
    ("round-s3", "hessian", 0.5),
    ("heisenberg3", "hessian", 0.3),
    ("round-s3", "taming", "r_tau"),
    ("heisenberg3", "taming", 0.02),
    ("heisenberg3", "levi", 0.3),
    ("heisenberg5", "levi", 0.3),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", default="32x16")
    ap.add_argument("--out", help="write one row per run to this CSV file")
    ap.add_argument("--tube", action="store_true", help="also run the Reeb tube probe on round-s3")
    args = ap.parse_args()
    grid = tuple(int(t) for t in args.grid.split("x"))

    rows = []
    for name, probe, r in RUNS:
        model = get_model(name).model
        if r == "r_tau":
            r = radius_bounds(model_bound_inputs(model)).r_tau
        t0 = time.perf_counter()
        rep = lab.PROBES[probe](model, np.zeros(model.dim), r, grid)
        rows.append((name, probe, r, rep.margin_min, rep.passed, time.perf_counter() - t0))
    if args.tube:
        model = get_model("round-s3").model
        t0 = time.perf_counter()
        rep = lab.reeb_tube_probe(model, model.orbits[0], 0.3, grid)
        rows.append(("round-s3", "tube", 0.3, rep.margin_min, rep.passed, time.perf_counter() - t0))

    print(f"{'model':<12} {'probe':<9} {'radius':>10} {'margin_min':>12}  pass  seconds")
    for name, probe, r, m, ok, dt in rows:
        print(f"{name:<12} {probe:<9} {r:>10.6g} {m:>12.4e}  {'yes' if ok else 'NO ':<4}  {dt:6.2f}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["model", "probe", "radius", "margin_min", "pass", "seconds"])
            w.writerows(rows)


if __name__ == "__main__":
    main()
