"""Built-in contact metric models, manifest loading and perturbed controls."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .bounds import BoundInputs
from .contact import ContactModel, OrbitSeed, compatibility_classify, frame_at
from .errors import ContactRadiusError, InvalidInputs, ManifestError, NotCompatible, UnknownModel
from .expr import parse
from .geometry import Chart, MetricField, point_geometry, sample_points, sec_range_estimate, sectional


@dataclass(frozen=True)
class Expected:
    theta_prime: float
    sec_range: tuple[float, float]
    ric_reeb: float
    inj: float | None
    conv: float | None
    is_CR: bool
    h_is_zero: bool
    reeb_orbit_seeds: tuple[OrbitSeed, ...] = ()


@dataclass(frozen=True)
class ModelSpec:
    name: str
    model: ContactModel
    expected: Expected
    notes: tuple[str, ...] = field(default=())


def _heisenberg(n: int, scale_xi: float = 1.0, name: str | None = None, j_rows=None) -> ContactModel:
    if n == 1:
        coords = ("x", "y", "z")
        pairs = [("x", "y")]
    else:
        coords = tuple(c for i in range(1, n + 1) for c in (f"x{i}", f"y{i}")) + ("z",)
        pairs = [(f"x{i}", f"y{i}") for i in range(1, n + 1)]
    d = 2 * n + 1
    chart = Chart(coords, ((-5.0, 5.0),) * d)
    alpha_txt = []
    for c in coords:
        if c == "z":
            alpha_txt.append("1/2")
        elif c.startswith("x"):
            alpha_txt.append(f"-{pairs[[p[0] for p in pairs].index(c)][1]}/2")
        else:
            alpha_txt.append("0")
    # g = s/4 (sum dx^2 + dy^2) + alpha (x) alpha
    q = f"{scale_xi!r}/4" if scale_xi != 1.0 else "1/4"
    rows = []
    for i in range(d):
        row = []
        for j in range(i, d):
            ai, aj = alpha_txt[i], alpha_txt[j]
            terms = []
            if i == j and coords[i] != "z":
                terms.append(q)
            if ai != "0" and aj != "0":
                terms.append(f"({ai})*({aj})")
            row.append(" + ".join(terms) if terms else "0")
        rows.append(row)
    metric = MetricField.from_strings(chart, rows)
    alpha = tuple(chart.parse(t) for t in alpha_txt)
    j_field = None
    if j_rows is not None:
        j_field = tuple(tuple(chart.parse(t) for t in r) for r in j_rows)
    box = ((-2.0, 2.0),) * d
    return ContactModel(name or f"heisenberg{d}", chart, alpha, metric, j_field, inj=10.0, conv=None,
                        orbits=(), flags=("open-manifold", "chart-truncated"), sample_box=box)


def _round_s3() -> ContactModel:
    coords = ("x", "y", "z")
    chart = Chart(coords, ((-2.0, 2.0),) * 3)
    D = "(1 + x^2 + y^2 + z^2)"
    alpha = ("(-4*y - 4*x*z)/{D}^2", "(4*x - 4*y*z)/{D}^2", "(2*(x^2 + y^2 - z^2) - 2)/{D}^2")
    alpha = tuple(chart.parse(t.format(D=D)) for t in alpha)
    g = f"4/{D}^2"
    metric = MetricField.from_strings(chart, [[g, "0", "0"], [g, "0"], [g]])
    orbit = OrbitSeed((1.0, 0.0, 0.0), 2 * math.pi)
    return ContactModel("round-s3", chart, alpha, metric, None, inj=math.pi, conv=math.pi / 2,
                        orbits=(orbit,), flags=(), sample_box=((-1.0, 1.0),) * 3)


_EXPECTED = {
    "heisenberg3": Expected(2.0, (-3.0, 1.0), 2.0, 10.0, None, True, True),
    "heisenberg5": Expected(2.0, (-3.0, 1.0), 4.0, 10.0, None, True, True),
    "round-s3": Expected(2.0, (1.0, 1.0), 2.0, math.pi, math.pi / 2, True, True,
                         (OrbitSeed((1.0, 0.0, 0.0), 2 * math.pi),)),
}

_BUILDERS = {
    "heisenberg3": lambda: _heisenberg(1),
    "heisenberg5": lambda: _heisenberg(2),
    "round-s3": _round_s3,
}


def list_models() -> list[str]:
    return list(_BUILDERS)


def validate_spec(spec: ModelSpec, n_points: int = 20, seed: int = 0, tol: float = 1e-7):
    """Self-test: computed quantities must agree with the declared ones."""
    m, ex = spec.model, spec.expected
    verdict = compatibility_classify(m, n_points=max(n_points, 50), seed=seed)
    if verdict.verdict != "Compatible" or abs(verdict.theta_prime - ex.theta_prime) > tol:
        raise ContactRadiusError(f"{spec.name}: declared theta' {ex.theta_prime} not reproduced ({verdict})")
    rng = np.random.default_rng(seed)
    pts = m.sample(n_points, rng)
    fr = frame_at(m, pts)
    if ex.h_is_zero and np.max(np.abs(fr.h)) > tol:
        raise ContactRadiusError(f"{spec.name}: h expected to vanish")
    pg = fr.geometry
    ric = _ricci_along(pg, fr.n_unit)
    if np.max(np.abs(ric - ex.ric_reeb)) > tol:
        raise ContactRadiusError(f"{spec.name}: Ric(R) expected {ex.ric_reeb}")
    lo, hi = ex.sec_range
    for _ in range(5):
        k = sectional(pg, rng.standard_normal(pts.shape), rng.standard_normal(pts.shape))
        if np.min(k) < lo - tol or np.max(k) > hi + tol:
            raise ContactRadiusError(f"{spec.name}: sectional curvature outside declared range")


def _ricci_along(pg, v):
    """Ric(v, v) as the trace of w -> R(w, v)v."""
    op = np.einsum("...lijk,...i,...k->...lj", pg.riemann, v, v)
    return np.einsum("...jj->...", op)


@lru_cache(maxsize=None)
def get_model(name: str) -> ModelSpec:
    if name not in _BUILDERS:
        raise UnknownModel(f"unknown model {name!r}; known: {', '.join(list_models())}")
    model = _BUILDERS[name]()
    ex = _EXPECTED[name]
    notes = ("inj is a chart-safe value for an open manifold",) if "chart-truncated" in model.flags else ()
    spec = ModelSpec(name, model, ex, notes)
    validate_spec(spec)
    return spec


# ---- perturbed controls ------------------------------------------------------

def control_conformal() -> ContactModel:
    """heisenberg3 with metric multiplied by (1 + x^2/10): the Reeb field stops being unit."""
    base = _heisenberg(1)
    chart = base.chart
    rows = [[f"(1 + x^2/10)*({base.metric.component(i, j)})" for j in range(i, 3)] for i in range(3)]
    metric = MetricField.from_strings(chart, rows)
    return ContactModel("heisenberg3-conformal", chart, base.alpha, metric, None, base.inj, None,
                        (), base.flags, base.sample_box)


def control_xi_scaled() -> ContactModel:
    """heisenberg3 with the metric multiplied by 1.21 on the contact planes only."""
    return _heisenberg(1, scale_xi=1.21, name="heisenberg3-xi-scaled")


def control_rotated_J(rate: float = 0.1) -> ContactModel:
    """heisenberg5 with J conjugated by a rotation of angle rate*x1 in the (X1, X2) plane."""
    c, s = f"cos({rate!r}*x1)", f"sin({rate!r}*x1)"
    rows = [
        ["0", f"-{c}", "0", s, "0"],
        [c, "0", s, "0", "0"],
        ["0", f"-{s}", "0", f"-{c}", "0"],
        [f"-{s}", "0", c, "0", "0"],
        ["0", f"-{c}*y1 - {s}*y2", "0", f"{s}*y1 - {c}*y2", "0"],
    ]
    return _heisenberg(2, name="heisenberg5-rotated-J", j_rows=rows)


CONTROLS = {
    "heisenberg3-conformal": (control_conformal, "classification"),
    "heisenberg3-xi-scaled": (control_xi_scaled, "nabla-reeb"),
    "heisenberg5-rotated-J": (control_rotated_J, "is_CR"),
}


# ---- manifests -----------------------------------------------------------------

@dataclass(frozen=True)
class LoadedManifest:
    model: ContactModel
    sha256: str
    sec_range: tuple[float, float] | None = None
    ric_min: float | None = None


def _need(obj, key, path, kind):
    if key not in obj:
        raise ManifestError(f"{path}.{key}", "missing field")
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, kind):
        raise ManifestError(f"{path}.{key}", f"expected {getattr(kind, '__name__', kind)}")
    return val


def _number_or_unknown(obj, key, path):
    val = obj.get(key, "unknown")
    if val == "unknown" or val is None:
        return None
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not val > 0:
        raise ManifestError(f"{path}.{key}", "expected a positive number or \"unknown\"")
    return float(val)


def _parse_expr(text, coords, path):
    if not isinstance(text, str):
        raise ManifestError(path, "expected an expression string")
    try:
        return parse(text, coords)
    except ContactRadiusError as exc:
        raise ManifestError(path, str(exc)) from None


def model_from_manifest(data: dict, name: str = "manifest") -> ContactModel:
    if not isinstance(data, dict):
        raise ManifestError("$", "expected a JSON object")
    dim = _need(data, "dim", "$", int)
    coords = _need(data, "coords", "$", list)
    if len(coords) != dim or not all(isinstance(c, str) for c in coords):
        raise ManifestError("$.coords", f"expected {dim} coordinate names")
    if len(set(coords)) != dim:
        raise ManifestError("$.coords", "coordinate names must be distinct")
    if dim < 3 or dim % 2 == 0:
        raise ManifestError("$.dim", "dimension must be odd and at least 3")
    n = data.get("n", (dim - 1) // 2)
    if n != (dim - 1) // 2:
        raise ManifestError("$.n", "n must satisfy dim = 2n + 1")
    dom = data.get("domain")
    if dom is None:
        domain = ((-1.0, 1.0),) * dim
    else:
        if not isinstance(dom, list) or len(dom) != dim:
            raise ManifestError("$.domain", f"expected {dim} intervals")
        domain = []
        for i, iv in enumerate(dom):
            if not (isinstance(iv, list) and len(iv) == 2 and all(isinstance(x, (int, float)) for x in iv)
                    and iv[0] < iv[1]):
                raise ManifestError(f"$.domain[{i}]", "expected [low, high] with low < high")
            domain.append((float(iv[0]), float(iv[1])))
        domain = tuple(domain)
    chart = Chart(tuple(coords), domain)

    alpha_txt = _need(data, "alpha", "$", list)
    if len(alpha_txt) != dim:
        raise ManifestError("$.alpha", f"expected {dim} components")
    alpha = tuple(_parse_expr(t, coords, f"$.alpha[{i}]") for i, t in enumerate(alpha_txt))

    rows = _need(data, "metric", "$", list)
    if len(rows) != dim:
        raise ManifestError("$.metric", f"expected {dim} rows")
    full = all(isinstance(r, list) and len(r) == dim for r in rows)
    upper = []
    for i, r in enumerate(rows):
        if not isinstance(r, list) or len(r) not in (dim, dim - i):
            raise ManifestError(f"$.metric[{i}]", f"expected {dim} or {dim - i} entries")
        entries = r[i:] if full else r
        upper.append(tuple(_parse_expr(t, coords, f"$.metric[{i}][{i + k}]") for k, t in enumerate(entries)))
    if full:
        for i in range(dim):
            for j in range(i + 1, dim):
                a = _parse_expr(rows[i][j], coords, f"$.metric[{i}][{j}]")
                b = _parse_expr(rows[j][i], coords, f"$.metric[{j}][{i}]")
                if a.root != b.root:
                    raise ManifestError(f"$.metric[{j}][{i}]", f"not symmetric: differs from $.metric[{i}][{j}]")
    metric = MetricField(chart, tuple(upper))

    j_field = None
    if data.get("J") is not None:
        jr = data["J"]
        if not isinstance(jr, list) or len(jr) != dim or any(not isinstance(r, list) or len(r) != dim for r in jr):
            raise ManifestError("$.J", f"expected a {dim}x{dim} matrix")
        j_field = tuple(tuple(_parse_expr(t, coords, f"$.J[{i}][{k}]") for k, t in enumerate(r))
                        for i, r in enumerate(jr))

    orbits = []
    for i, o in enumerate(data.get("orbits", [])):
        path = f"$.orbits[{i}]"
        if not isinstance(o, dict):
            raise ManifestError(path, "expected an object")
        pt = _need(o, "point", path, list)
        if len(pt) != dim or not all(isinstance(x, (int, float)) for x in pt):
            raise ManifestError(f"{path}.point", f"expected {dim} numbers")
        orbits.append(OrbitSeed(tuple(float(x) for x in pt), _number_or_unknown(o, "period", path)))

    return ContactModel(str(data.get("name", name)), chart, alpha, metric, j_field,
                        inj=_number_or_unknown(data, "inj", "$"), conv=_number_or_unknown(data, "conv", "$"),
                        orbits=tuple(orbits))


def load_manifest(path) -> LoadedManifest:
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise ManifestError(str(p), f"cannot read: {exc.strerror}") from None
    try:
        data = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ManifestError("$", f"invalid JSON: {exc}") from None
    model = model_from_manifest(data, name=p.stem)
    # positive definiteness and contact condition at a few interior points
    pts = sample_points(model.chart, 8, np.random.default_rng(0))
    try:
        point_geometry(model.metric, pts, curvature=False)
    except ContactRadiusError as exc:
        raise ManifestError("$.metric", str(exc)) from None
    return LoadedManifest(model, hashlib.sha256(raw).hexdigest())



# ---- curvature data for the radius bounds -----------------------------------------

def builtin_expected(model: ContactModel) -> Expected | None:
    """Declared metadata when ``model`` is the cached built-in of that name."""
    if model.name in _BUILDERS and get_model(model.name).model is model:
        return _EXPECTED[model.name]
    return None


def model_bound_inputs(model: ContactModel, expected: Expected | None = None, seed: int = 0,
                       n_points: int = 64, n_planes: int = 24, inj: float | None = None) -> BoundInputs:
    """Bound inputs from declared metadata, or sampled estimates for other models.

    Sampled curvature ranges are estimates, not certified bounds.
    """
    if expected is None:
        expected = builtin_expected(model)
    inj = inj if inj is not None else model.inj
    if expected is not None:
        lo, hi = expected.sec_range
        tp, ric = expected.theta_prime, expected.ric_reeb
        inj = inj if inj is not None else expected.inj
    else:
        verdict = compatibility_classify(model, n_points=n_points, seed=seed)
        if verdict.verdict != "Compatible":
            raise NotCompatible(f"model {model.name!r} is {verdict.verdict}: failed {verdict.failed}")
        tp = verdict.theta_prime
        lo, hi = sec_range_estimate(model.metric, n_points, n_planes, seed, box=model.sample_box)
        pts = model.sample(n_points, np.random.default_rng(seed))
        fr = frame_at(model, pts)
        ric = float(np.min(_ricci_along(fr.geometry, fr.n_unit)))
    if inj is None:
        raise InvalidInputs("injectivity radius unknown; pass it explicitly")
    return BoundInputs(model.n, float(inj), float(lo), float(hi), float(max(abs(lo), abs(hi))),
                       float(tp), float(ric))
