"""Command-line interface: ``verify``, ``bounds``, ``probe`` and ``tube``."""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import BoundInputs, radius_bounds, rough_proof_chain
from .errors import ContactRadiusError, InvalidInputs, OrbitNotClosed
from .identities import CHECK_IDS, run_identity_suite
from .lab import DEFAULT_GRID, PROBE_TOL, PROBES, reeb_tube_probe
from .models import builtin_expected, get_model, list_models, load_manifest, model_bound_inputs

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


# ---- stable JSON ---------------------------------------------------------------------

def _encode(obj, out: list):
    if obj is None or obj is True or obj is False:
        out.append({None: "null", True: "true", False: "false"}[obj])
    elif isinstance(obj, (int, np.integer)) and not isinstance(obj, bool):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        x = float(obj)
        out.append(format(x, ".17g") if math.isfinite(x) else "null")
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        out.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if i:
                out.append(", ")
            _encode(str(k), out)
            out.append(": ")
            _encode(v, out)
        out.append("}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        out.append("[")
        for i, v in enumerate(list(obj)):
            if i:
                out.append(", ")
            _encode(v, out)
        out.append("]")
    else:
        raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj) -> str:
    """JSON with insertion-ordered keys and floats printed to 17 significant digits."""
    out: list = []
    _encode(obj, out)
    return "".join(out)


# ---- model resolution --------------------------------------------------------------

class _Resolved:
    def __init__(self, model, info, loaded=None):
        self.model = model
        self.info = info
        self.loaded = loaded


def _resolve(args) -> _Resolved:
    if getattr(args, "manifest", None):
        loaded = load_manifest(args.manifest)
        return _Resolved(loaded.model, {"name": loaded.model.name, "source": "manifest",
                                        "manifest": str(args.manifest), "sha256": loaded.sha256}, loaded)
    if not getattr(args, "model", None):
        raise InvalidInputs("one of --model or --manifest is required")
    spec = get_model(args.model)
    return _Resolved(spec.model, {"name": spec.name, "source": "builtin", "flags": list(spec.model.flags)})


def _parse_point(text: str | None, model) -> np.ndarray:
    d = model.dim
    if text is None:
        lo, hi = model.chart.lower, model.chart.upper
        p = np.where((lo < 0) & (hi > 0), 0.0, 0.5 * (lo + hi))
        return p
    try:
        vals = [float(t) for t in text.split(",")]
    except ValueError:
        raise InvalidInputs(f"--point must be {d} comma-separated numbers, got {text!r}") from None
    if len(vals) != d:
        raise InvalidInputs(f"--point needs {d} coordinates, got {len(vals)}")
    return np.array(vals)


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        a, b = text.lower().split("x")
        grid = (int(a), int(b))
    except ValueError:
        raise InvalidInputs(f"--grid must look like 32x16, got {text!r}") from None
    if grid[0] < 1 or grid[1] < 1:
        raise InvalidInputs("--grid entries must be positive")
    return grid


# ---- commands ------------------------------------------------------------------------

def cmd_verify(args):
    res = _resolve(args)
    checks = args.check or None
    if checks:
        bad = [c for c in checks if c not in CHECK_IDS]
        if bad:
            raise InvalidInputs(f"unknown check id(s): {', '.join(bad)}")
    if args.points < 1:
        raise InvalidInputs("--points must be positive")
    results = run_identity_suite(res.model, points=args.points, seed=args.seed, tol=args.tol, checks=checks)
    ok = all(r.passed for r in results)
    dicts = [r.to_dict() for r in results]
    lines = [f"{'check':<18} {'status':<6} {'residual':>12} {'margin':>12}"]
    for r in results:
        margin = "-" if r.margin is None else f"{r.margin:.3e}"
        lines.append(f"{r.check_id:<18} {'PASS' if r.passed else 'FAIL':<6} {r.residual:>12.3e} {margin:>12}")
    return res.info, dicts, lines, ok


def _flag_inputs(args) -> BoundInputs:
    need = ["dim", "inj", "sec_min", "sec_max", "theta_prime", "ric_min"]
    missing = ["--" + k.replace("_", "-") for k in need if getattr(args, k) is None]
    if missing:
        raise InvalidInputs(f"missing {', '.join(missing)} (or use --model)")
    if args.dim < 3 or args.dim % 2 == 0:
        raise InvalidInputs("--dim must be odd and at least 3")
    sec_abs = args.sec_abs if args.sec_abs is not None else max(abs(args.sec_min), abs(args.sec_max))
    return BoundInputs((args.dim - 1) // 2, args.inj, args.sec_min, args.sec_max, sec_abs,
                       args.theta_prime, args.ric_min)


def cmd_bounds(args):
    notes = []
    if args.model or args.manifest:
        res = _resolve(args)
        source = "metadata" if builtin_expected(res.model) is not None else "estimate"
        inputs = model_bound_inputs(res.model, seed=args.seed)
        if "chart-truncated" in res.model.flags:
            notes.append("inj is a chart-safe value for an open manifold; radii are chart-truncated")
        if source == "estimate":
            notes.append("curvature inputs are sampled estimates, not certified bounds")
        info = res.info
    else:
        inputs = _flag_inputs(args)
        source = "flags"
        info = None
    report = radius_bounds(inputs)
    chain = rough_proof_chain(inputs)
    if not math.isclose(chain, report.darboux_rough, rel_tol=1e-12):
        notes.append("darboux_rough follows the theorem statement; the proof chain delivers rough_proof_chain")
    item = {"kind": "bounds", "source": source,
            "inputs": {k: getattr(inputs, k) for k in BoundInputs.__dataclass_fields__},
            "report": report.to_dict(), "rough_proof_chain": chain, "notes": notes}
    lines = [f"inputs ({source}): " + ", ".join(f"{k}={v:.10g}" for k, v in item["inputs"].items())]
    for k, v in report.to_dict().items():
        lines.append(f"{k:<18} {'n/a' if v is None else format(v, '.10g')}")
    lines.append(f"{'rough_proof_chain':<18} {chain:.10g}")
    lines += [f"note: {n}" for n in notes]
    return info, [item], lines, True


def _probe_lines(rep):
    lines = [f"{rep.probe_id} probe at radius {rep.radius:.6g}: {'PASS' if rep.passed else 'FAIL'}",
             f"  margin_min {rep.margin_min:.6e} at direction {rep.worst[0]}, s = {rep.worst[1]:.6g}"
             f" ({rep.samples} samples, tolerance {rep.tolerance:g})"]
    lines += [f"  {k:<22} {v:.6e}" if isinstance(v, float) else f"  {k:<22} {v}" for k, v in rep.margins.items()]
    return lines


def _write_csv(path, rep):
    Path(path).write_text(rep.csv_text())


def cmd_probe(args):
    res = _resolve(args)
    p = _parse_point(args.point, res.model)
    grid = _parse_grid(args.grid)
    if not args.radius > 0:
        raise InvalidInputs("--radius must be positive")
    rep = PROBES[args.probe](res.model, p, args.radius, grid, tol=args.tol, seed=args.seed)
    if args.csv:
        _write_csv(args.csv, rep)
    item = rep.to_dict()
    item["point"] = p.tolist()
    return res.info, [item], _probe_lines(rep), rep.passed


def cmd_tube(args):
    res = _resolve(args)
    orbits = res.model.orbits
    if not orbits:
        raise OrbitNotClosed(f"model {res.model.name!r} has no closed Reeb orbit seeds")
    if not 0 <= args.orbit < len(orbits):
        raise InvalidInputs(f"--orbit must lie in 0..{len(orbits) - 1}")
    grid = _parse_grid(args.grid)
    if not args.radius > 0:
        raise InvalidInputs("--radius must be positive")
    seed = orbits[args.orbit]
    rep = reeb_tube_probe(res.model, seed, args.radius, grid, tol=args.tol, seed=args.seed)
    if args.csv:
        _write_csv(args.csv, rep)
    item = rep.to_dict()
    item["orbit"] = {"index": args.orbit, "point": list(seed.point), "period": seed.period}
    return res.info, [item], _probe_lines(rep), rep.passed


# ---- parser and entry point -----------------------------------------------------------

def _add_model_args(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--model", help=f"built-in model ({', '.join(list_models())})")
    g.add_argument("--manifest", type=Path, help="JSON model manifest")


def _add_common(p):
    p.add_argument("--seed", type=int, default=0, help="seed for every random choice")
    p.add_argument("--json", action="store_true", help="print a JSON report instead of a table")
    p.add_argument("--timing", action="store_true", help="record wall-clock time in elapsed_ms")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="contact-radius", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run the identity suite on a model")
    _add_model_args(p)
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--check", nargs="+", metavar="ID", help="restrict to these check ids")
    _add_common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bounds", help="evaluate the radius bounds")
    _add_model_args(p)
    p.add_argument("--dim", type=int)
    p.add_argument("--inj", type=float)
    p.add_argument("--sec-min", type=float)
    p.add_argument("--sec-max", type=float)
    p.add_argument("--sec-abs", type=float)
    p.add_argument("--theta-prime", type=float)
    p.add_argument("--ric-min", type=float)
    _add_common(p)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("probe", help="run a geodesic probe around a point")
    p.add_argument("probe", choices=list(PROBES))
    _add_model_args(p)
    p.add_argument("--point", help="comma-separated coordinates (default: chart origin)")
    p.add_argument("--radius", type=float, required=True)
    p.add_argument("--grid", default=f"{DEFAULT_GRID[0]}x{DEFAULT_GRID[1]}", help="directions x radii")
    p.add_argument("--csv", type=Path, help="write per-sample margins here")
    p.add_argument("--tol", type=float, default=PROBE_TOL)
    _add_common(p)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("tube", help="check transversality along a closed Reeb orbit")
    _add_model_args(p)
    p.add_argument("--orbit", type=int, default=0)
    p.add_argument("--radius", type=float, required=True)
    p.add_argument("--grid", default=f"{DEFAULT_GRID[0]}x{DEFAULT_GRID[1]}")
    p.add_argument("--csv", type=Path)
    p.add_argument("--tol", type=float, default=PROBE_TOL)
    _add_common(p)
    p.set_defaults(func=cmd_tube)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    start = time.perf_counter()
    try:
        info, results, lines, ok = args.func(args)
    except ContactRadiusError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # keep the documented exit codes even on internal errors
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    elapsed = (time.perf_counter() - start) * 1000 if args.timing else 0
    if args.json:
        report = {"version": __version__, "command": argv, "seed": args.seed, "model": info,
                  "results": results, "elapsed_ms": elapsed}
        print(dumps(report))
    else:
        if info is not None:
            print(f"model: {info['name']} ({info['source']})")
        print("\n".join(lines))
        print("result: " + ("PASS" if ok else "FAIL"))
    return EXIT_OK if ok else EXIT_FAIL


if __name__ == "__main__":
    raise SystemExit(main())
