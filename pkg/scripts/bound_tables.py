"""Tabulate the radius bounds for the built-in models and over a curvature sweep.

The sweep fixes n, inj and theta' and varies a symmetric curvature bound K,
showing how the refined, rough and three-dimensional radii scale.
"""

import argparse
import math

import numpy as np

from contact_radius.bounds import BoundInputs, radius_bounds, rough_proof_chain
from contact_radius.models import get_model, list_models, model_bound_inputs

COLUMNS = ("r_perp", "r_tau", "darboux_refined", "darboux_rough", "bound_3d", "tightness_bound")


def _row(label, inp):
    rep = radius_bounds(inp)
    vals = [getattr(rep, c) for c in COLUMNS] + [rough_proof_chain(inp)]
    return f"{label:<22}" + "".join(f"{'-' if v is None else format(v, '.6g'):>18}" for v in vals)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1)
    ap.add_argument("--inj", type=float, default=math.pi)
    ap.add_argument("--theta-prime", type=float, default=2.0)
    ap.add_argument("--points", type=int, default=9, help="number of K values in the sweep")
    args = ap.parse_args()

    header = f"{'':<22}" + "".join(f"{c:>18}" for c in COLUMNS + ("rough_proof_chain",))
    print(header)
    for name in list_models():
        print(_row(name, model_bound_inputs(get_model(name).model)))
    print()
    print(f"symmetric sweep: n={args.n}, inj={args.inj:g}, theta'={args.theta_prime:g}, ric_min=-2nK")
    print(header)
    for K in np.geomspace(1e-2, 1e2, args.points):
        inp = BoundInputs(args.n, args.inj, -K, K, K, args.theta_prime, -2 * args.n * K)
        print(_row(f"K={K:.4g}", inp))


if __name__ == "__main__":
    main()
