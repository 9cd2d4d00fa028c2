"""Sampled numerical verification of the contact-metric identities and inequalities."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .contact import ContactFrame, ContactModel, compatibility_classify, frame_at
from .errors import ContactRadiusError, NotCompatible
from .geometry import eval_components
from .parallel import pmap

CHECK_IDS = (
    "reeb-geodesic",
    "phi-square",
    "h-symmetric",
    "nabla-reeb",
    "anticommute",
    "ii-trace",
    "reeb-J-commute",
    "nabla-phi",
    "ricci-h",
    "nabla-reeb-norm",
    "nabla-phi-norm",
    "levi",
    "levi-AB",
    "torsion-3d",
    "torsion-relation",
)

DIRECTIONS_PER_POINT = 4


@dataclass
class CheckResult:
    check_id: str
    residual: float
    margin: float | None
    tolerance: float
    passed: bool
    worst_point: list[float]
    samples: int
    kind: str = "identity"
    detail: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "check_id": self.check_id,
            "kind": self.kind,
            "residual": self.residual,
            "margin": self.margin,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "worst_point": self.worst_point,
            "samples": self.samples,
            "detail": self.detail,
            **({"extra": self.extra} if self.extra else {}),
        }


@dataclass
class _Ctx:
    model: ContactModel
    frame: ContactFrame
    points: np.ndarray
    theta_prime: float
    ric_min: float
    B: float
    tol: float


# ---- helpers -----------------------------------------------------------------

def _gnorm(fr, v):
    return np.sqrt(np.maximum(fr.geometry.inner(v, v), 0.0))


def _rel(diff_norm, *scales):
    s = np.ones_like(diff_norm)
    for t in scales:
        s = np.maximum(s, np.abs(t))
    return diff_norm / s


def _bracket(x, dx, y, dy):
    """Lie bracket [X, Y] of fields with derivatives ``d[..., i, k] = d_k X^i``."""
    return np.einsum("...k,...ik->...i", x, dy) - np.einsum("...k,...ik->...i", y, dx)


def _identity(ctx, check_id, res, extra_detail="", samples=None):
    res = np.asarray(res, dtype=float)
    flat = res.reshape(-1)
    k = int(np.argmax(flat))
    npts = ctx.points.shape[0]
    worst = ctx.points[k % npts]
    r = float(flat[k])
    return CheckResult(check_id, r, None, ctx.tol, bool(r <= ctx.tol), worst.tolist(),
                       int(samples if samples is not None else flat.size), "identity", extra_detail)


def _inequality(ctx, check_id, margin, detail=""):
    m = np.asarray(margin, dtype=float).reshape(-1)
    k = int(np.argmin(m))
    worst = ctx.points[k % ctx.points.shape[0]]
    mm = float(m[k])
    return CheckResult(check_id, max(0.0, -mm), mm, ctx.tol, bool(mm >= -ctx.tol), worst.tolist(),
                       int(m.size), "inequality", detail)


def _unit_random(fr, rng, xi=False):
    v = fr.random_xi(rng) if xi else rng.standard_normal(fr.reeb.shape)
    return v / _gnorm(fr, v)[:, None]


def _orthonormal(fr):
    return fr.geometry.orthonormal_frame()


def _op_norm(fr, mat):
    """Operator norm of endomorphisms with respect to the metric."""
    E = _orthonormal(fr)
    hat = np.linalg.solve(E, mat @ E)
    return np.linalg.norm(hat, ord=2, axis=(-2, -1))


# ---- individual checks ----------------------------------------------------------

def check_reeb_geodesic(ctx, rng):
    fr = ctx.frame
    acc = fr.nabla_reeb(fr.reeb)
    res = [_gnorm(fr, acc)]
    for _ in range(DIRECTIONS_PER_POINT):
        w = rng.standard_normal(fr.reeb.shape)
        # V = w - alpha(w) R is tangent to the contact planes everywhere
        V = w - fr.alpha_of(w)[:, None] * fr.reeb
        dV = -(np.einsum("...j,...jk->...k", w, fr.dalpha_cov)[:, None, :] * fr.reeb[:, :, None]
               + fr.alpha_of(w)[:, None, None] * fr.dreeb)
        nab = fr.geometry.covariant(fr.reeb, V, dV)
        res.append(_rel(np.abs(fr.alpha_of(nab)), _gnorm(fr, nab), _gnorm(fr, V)))
    return _identity(ctx, "reeb-geodesic", np.stack(res))


def check_phi_square(ctx, rng):
    fr = ctx.frame
    res = []
    for _ in range(DIRECTIONS_PER_POINT):
        v = _unit_random(fr, rng)
        p2 = fr.apply(fr.phi, fr.apply(fr.phi, v))
        rhs = -v + fr.alpha_of(v)[:, None] * fr.reeb
        res.append(_rel(_gnorm(fr, p2 - rhs), _gnorm(fr, p2), _gnorm(fr, rhs)))
    return _identity(ctx, "phi-square", np.stack(res))


def check_h_symmetric(ctx, rng):
    fr = ctx.frame
    res = []
    for _ in range(DIRECTIONS_PER_POINT):
        u, v = _unit_random(fr, rng, True), _unit_random(fr, rng, True)
        a = fr.geometry.inner(fr.apply(fr.h, u), v)
        b = fr.geometry.inner(u, fr.apply(fr.h, v))
        res.append(_rel(np.abs(a - b), a, b))
    return _identity(ctx, "h-symmetric", np.stack(res))


def check_nabla_reeb(ctx, rng):
    fr = ctx.frame
    res = []
    for _ in range(DIRECTIONS_PER_POINT):
        v = _unit_random(fr, rng)
        lhs = fr.nabla_reeb(v)
        rhs = fr.apply(fr.phi, 0.5 * ctx.theta_prime * v - fr.apply(fr.h, v))
        res.append(_rel(_gnorm(fr, lhs - rhs), _gnorm(fr, lhs), _gnorm(fr, rhs)))
    return _identity(ctx, "nabla-reeb", np.stack(res))


def check_anticommute(ctx, rng):
    fr = ctx.frame
    res = []
    for _ in range(DIRECTIONS_PER_POINT):
        v = _unit_random(fr, rng)
        a = fr.apply(fr.phi, fr.apply(fr.h, v))
        b = fr.apply(fr.h, fr.apply(fr.phi, v))
        res.append(_rel(_gnorm(fr, a + b), _gnorm(fr, a), _gnorm(fr, b)))
    return _identity(ctx, "anticommute", np.stack(res))


def _II(fr, u, v):
    return np.einsum("...i,...ij,...j->...", u, fr.II, v)


def check_ii_trace(ctx, rng):
    fr = ctx.frame
    res = []
    for _ in range(DIRECTIONS_PER_POINT):
        v = _unit_random(fr, rng, True)
        Jv = fr.apply(fr.phi, v)
        a, b = _II(fr, v, v), _II(fr, Jv, Jv)
        res.append(_rel(np.abs(a + b), a, b))
    return _identity(ctx, "ii-trace", np.stack(res))


def check_reeb_J_commute(ctx, rng):
    fr = ctx.frame
    geo = fr.geometry
    res = []
    for _ in range(DIRECTIONS_PER_POINT):
        V, dV = fr.xi_field(rng.standard_normal(fr.reeb.shape))
        JV, dJV = fr.phi_field(V, dV)
        lhs = geo.covariant(fr.reeb, JV, dJV)
        rhs = fr.apply(fr.phi, geo.covariant(fr.reeb, V, dV))
        res.append(_rel(_gnorm(fr, lhs - rhs), _gnorm(fr, lhs), _gnorm(fr, rhs)))
    return _identity(ctx, "reeb-J-commute", np.stack(res))


def check_nabla_phi(ctx, rng):
    fr = ctx.frame
    geo = fr.geometry
    tp = ctx.theta_prime
    res = []
    for k in range(DIRECTIONS_PER_POINT + 1):
        # first round uses u = R; later rounds mix contact and Reeb components
        u = fr.reeb.copy() if k == 0 else _unit_random(fr, rng)
        v = _unit_random(fr, rng)
        w = _unit_random(fr, rng)
        if k == 2:
            v = fr.reeb.copy()
        if k == 3:
            w = fr.reeb.copy()
        lhs = geo.inner(fr.apply(fr.nabla_phi(u), v), w)
        t1 = geo.inner(fr.torsion(v, w), fr.apply(fr.phi, u))
        uxi, vxi, wxi = fr.xi_part(u), fr.xi_part(v), fr.xi_part(w)
        t2 = -tp * fr.alpha_of(w) * geo.inner(uxi, vxi)
        t3 = tp * fr.alpha_of(v) * geo.inner(uxi, wxi)
        rhs = 0.5 * (t1 + t2 + t3)
        res.append(_rel(np.abs(lhs - rhs), lhs, t1, t2, t3))
    return _identity(ctx, "nabla-phi", np.stack(res))


def _h_norm(fr):
    """Largest |eigenvalue| of h restricted to the contact planes."""
    E = _orthonormal(fr)
    hat = np.linalg.solve(E, fr.h @ E)
    hat = 0.5 * (hat + np.swapaxes(hat, -1, -2))
    return np.max(np.abs(np.linalg.eigvalsh(hat)), axis=-1)


def _ric_reeb(fr):
    op = np.einsum("...lijk,...i,...k->...lj", fr.geometry.riemann, fr.n_unit, fr.n_unit)
    return np.einsum("...jj->...", op)


def check_ricci_h(ctx, rng):
    fr = ctx.frame
    n = fr.n
    lhs = _h_norm(fr) ** 2
    rhs = n * (ctx.theta_prime / 2) ** 2 - 0.5 * _ric_reeb(fr)
    margin = (rhs - lhs) / np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(rhs)))
    result = _inequality(ctx, "ricci-h", margin)
    if n == 1:
        # equality branch in dimension 3
        eq = _identity(ctx, "ricci-h", np.abs(rhs - lhs) / np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(rhs))))
        eq.margin = result.margin
        eq.detail = "equality branch (dimension 3)"
        return eq
    return result


def check_nabla_reeb_norm(ctx, rng):
    fr = ctx.frame
    margins = []
    # operator norm of u -> nabla_u R covers every direction at once
    mat = fr.dreeb + np.einsum("...ikj,...j->...ik", fr.geometry.gamma, fr.reeb)
    op = _op_norm(fr, mat)
    margins.append((ctx.B - op) / max(1.0, ctx.B))
    for _ in range(DIRECTIONS_PER_POINT):
        u = _unit_random(fr, rng)
        margins.append((ctx.B - _gnorm(fr, fr.nabla_reeb(u))) / max(1.0, ctx.B))
    return _inequality(ctx, "nabla-reeb-norm", np.stack(margins), f"B = {ctx.B:.17g}")


def check_nabla_phi_norm(ctx, rng):
    fr = ctx.frame
    margins = []
    directions = [fr.reeb / fr.rho[:, None]] + [_unit_random(fr, rng) for _ in range(DIRECTIONS_PER_POINT)]
    directions += [_unit_random(fr, rng, True) for _ in range(DIRECTIONS_PER_POINT)]
    for u in directions:
        op = _op_norm(fr, fr.nabla_phi(u))
        margins.append((2 * ctx.B - op) / max(1.0, 2 * ctx.B))
    return _inequality(ctx, "nabla-phi-norm", np.stack(margins), f"2B = {2 * ctx.B:.17g} (operator norm)")


# ---- Levi form on the product with a line ---------------------------------------------

def levi_test_functions(model: ContactModel, rng: np.random.Generator) -> list[str]:
    """Coordinate functions, one random quadratic and the squared coordinate radius."""
    coords = model.chart.coords
    funcs = list(coords)
    terms = []
    for i, a in enumerate(coords):
        for b in coords[i:]:
            terms.append(f"({rng.uniform(-1, 1)!r})*{a}*{b}")
        terms.append(f"({rng.uniform(-1, 1)!r})*{a}")
    funcs.append(" + ".join(terms))
    funcs.append(" + ".join(f"{c}^2" for c in coords))
    return funcs


def _j_ext(fr, x):
    """Almost complex structure on the product, x = (M part, t part)."""
    xm, xt = x[..., :-1], x[..., -1]
    return np.concatenate([fr.apply(fr.phi, xm) + xt[..., None] * fr.reeb, -fr.alpha_of(xm)[..., None]], axis=-1)


def levi_samples(fr, f_text, model, rng, count=1):
    """Levi form and Hessian sum at candidates v in the complex tangencies.

    Returns ``(L, hess_sum, tangency_defect, valid)`` arrays over the batch.
    """
    d = model.dim
    expr = model.chart.parse(f_text)
    pts = fr.point
    _, df, d2f = eval_components([expr], pts, 2)
    df, d2f = df[:, 0, :], d2f[:, 0, :, :]
    # beta = df o J on the product; it does not depend on t
    beta = np.concatenate([np.einsum("...i,...ij->...j", df, fr.phi),
                           np.einsum("...i,...i->...", df, fr.reeb)[..., None]], axis=-1)
    dbeta_m = (np.einsum("...ik,...ij->...jk", d2f, fr.phi) + np.einsum("...i,...ijk->...jk", df, fr.dphi))
    dbeta_t = np.einsum("...ik,...i->...k", d2f, fr.reeb) + np.einsum("...i,...ik->...k", df, fr.dreeb)
    D = np.zeros(pts.shape[:-1] + (d + 1, d + 1))  # D[a, b] = d_b beta_a
    D[..., :d, :d] = dbeta_m
    D[..., d, :d] = dbeta_t
    dbeta = np.swapaxes(D, -1, -2) - D  # (d beta)_ab = d_a beta_b - d_b beta_a

    G = np.zeros(pts.shape[:-1] + (d + 1, d + 1))
    G[..., :d, :d] = fr.geometry.g
    G[..., d, d] = 1.0
    dfw = np.concatenate([df, np.zeros(pts.shape[:-1] + (1,))], axis=-1)
    C = np.stack([dfw, beta], axis=-2)  # (2, d+1)
    Ginv = np.linalg.inv(G)
    gram = C @ Ginv @ np.swapaxes(C, -1, -2)
    cond = np.linalg.cond(gram)
    valid = cond < 1e8
    gram = np.where(valid[..., None, None], gram, np.eye(2))
    hess = d2f - np.einsum("...kij,...k->...ij", fr.geometry.gamma, df)

    out = []
    for _ in range(count):
        x = rng.standard_normal(pts.shape[:-1] + (d + 1,))
        corr = Ginv @ np.swapaxes(C, -1, -2) @ np.linalg.solve(gram, (C @ x[..., None]))
        v = x - corr[..., 0]
        v = v / np.sqrt(np.einsum("...a,...ab,...b->...", v, G, v))[..., None]
        Jv = _j_ext(fr, v)
        L = -np.einsum("...a,...ab,...b->...", v, dbeta, Jv)
        H = (np.einsum("...i,...ij,...j->...", v[..., :d], hess, v[..., :d])
             + np.einsum("...i,...ij,...j->...", Jv[..., :d], hess, Jv[..., :d]))
        scale = np.maximum(1.0, np.linalg.norm(df, axis=-1))
        defect = np.maximum(np.abs(np.einsum("...a,...a->...", dfw, v)),
                            np.abs(np.einsum("...a,...a->...", beta, v))) / scale
        out.append((L, H, defect, valid))
    return out


def check_levi(ctx, rng):
    fr, model = ctx.frame, ctx.model
    res, defects, total = [], [], 0
    for f in levi_test_functions(model, rng):
        for L, H, defect, valid in levi_samples(fr, f, model, rng, count=2):
            r = np.where(valid, _rel(np.abs(L - H), L, H), 0.0)
            res.append(r)
            defects.append(np.where(valid, defect, 0.0))
            total += int(np.sum(valid))
    out = _identity(ctx, "levi", np.stack(res), samples=total)
    worst_defect = float(np.max(np.stack(defects)))
    out.extra = {"tangency_defect": worst_defect}
    if worst_defect >= 1e-10:
        out.passed = False
        out.detail = "candidate vectors are not complex tangencies"
    return out


def levi_AB(fr, w):
    """A(v), B(v) on the product, with v the contact-plane field through P w.

    Returns (A, B, v) where A and B carry a trailing t-component.
    """
    geo = fr.geometry
    V, dV = fr.xi_field(w)
    JV, dJV = fr.phi_field(V, dV)
    br = _bracket(JV, dJV, V, dV)
    A_m = fr.apply(fr.phi, br) - geo.covariant(V, V, dV) - geo.covariant(JV, JV, dJV)
    A = np.concatenate([A_m, -fr.alpha_of(br)[..., None]], axis=-1)
    br2 = _bracket(V, dV, fr.reeb, fr.dreeb)
    B_m = fr.apply(fr.phi, br2) + geo.covariant(JV, fr.reeb, fr.dreeb) + geo.covariant(fr.reeb, JV, dJV)
    B = np.concatenate([B_m, -fr.alpha_of(br2)[..., None]], axis=-1)
    return A, B, V


def _wnorm(fr, x):
    return np.sqrt(fr.geometry.inner(x[..., :-1], x[..., :-1]) + x[..., -1] ** 2)


def check_levi_AB(ctx, rng):
    fr = ctx.frame
    tp = ctx.theta_prime
    res = []
    for _ in range(DIRECTIONS_PER_POINT):
        A, B, V = levi_AB(fr, rng.standard_normal(fr.reeb.shape))
        vv = fr.geometry.inner(V, V)
        A_exp = np.zeros_like(A)
        A_exp[..., -1] = -tp * vv
        B_exp = np.concatenate([-tp * V, np.zeros(V.shape[:-1] + (1,))], axis=-1)
        res.append(_rel(_wnorm(fr, A - A_exp), _wnorm(fr, A), vv * tp))
        res.append(_rel(_wnorm(fr, B - B_exp), _wnorm(fr, B), tp * np.sqrt(vv)))
    return _identity(ctx, "levi-AB", np.stack(res))


def check_torsion_3d(ctx, rng):
    fr = ctx.frame
    if fr.n != 1:
        return CheckResult("torsion-3d", 0.0, None, ctx.tol, True, [], 0, "identity",
                           "skipped: applies in dimension 3 only")
    res = []
    for _ in range(DIRECTIONS_PER_POINT):
        v = _unit_random(fr, rng, True)
        a = fr.torsion(v, v)
        b = fr.torsion(v, fr.apply(fr.phi, v))
        # normal component scales with the rotation speed; equals -|v|^2 n when theta' = 1
        target = -ctx.theta_prime * fr.geometry.inner(v, v)[:, None] * fr.n_unit
        res.append(_rel(_gnorm(fr, a)))
        res.append(_rel(_gnorm(fr, b - target), _gnorm(fr, b), 1.0))
    return _identity(ctx, "torsion-3d", np.stack(res))


def check_torsion_relation(ctx, rng):
    fr = ctx.frame
    res = []
    for _ in range(DIRECTIONS_PER_POINT):
        V, dV = fr.xi_field(rng.standard_normal(fr.reeb.shape))
        W, dW = fr.xi_field(rng.standard_normal(fr.reeb.shape))
        JV, dJV = fr.phi_field(V, dV)
        JW, dJW = fr.phi_field(W, dW)
        # [J, J](v, w) from brackets of the extensions
        mixed = _bracket(JV, dJV, W, dW) + _bracket(V, dV, JW, dJW)
        jj = -_bracket(V, dV, W, dW) + _bracket(JV, dJV, JW, dJW) - fr.apply(fr.phi, mixed)
        lhs = fr.torsion(V, W)
        # -d alpha(v, w) = theta' <v, Jw>
        rhs = jj + ctx.theta_prime * fr.geometry.inner(V, JW)[:, None] * fr.reeb
        res.append(_rel(_gnorm(fr, lhs - rhs), _gnorm(fr, lhs), _gnorm(fr, jj)))
    return _identity(ctx, "torsion-relation", np.stack(res))


CHECKS = {
    "reeb-geodesic": check_reeb_geodesic,
    "phi-square": check_phi_square,
    "h-symmetric": check_h_symmetric,
    "nabla-reeb": check_nabla_reeb,
    "anticommute": check_anticommute,
    "ii-trace": check_ii_trace,
    "reeb-J-commute": check_reeb_J_commute,
    "nabla-phi": check_nabla_phi,
    "ricci-h": check_ricci_h,
    "nabla-reeb-norm": check_nabla_reeb_norm,
    "nabla-phi-norm": check_nabla_phi_norm,
    "levi": check_levi,
    "levi-AB": check_levi_AB,
    "torsion-3d": check_torsion_3d,
    "torsion-relation": check_torsion_relation,
}


def run_identity_suite(model: ContactModel, points: int = 100, seed: int = 0, tol: float = 1e-6,
                       checks=None) -> list[CheckResult]:
    """Run the selected checks (all by default) on seeded random points."""
    selected = list(CHECK_IDS) if not checks else list(checks)
    for c in selected:
        if c not in CHECKS:
            raise ValueError(f"unknown check {c!r}")
    if points < 1:
        raise ValueError("need at least one sample point")
    verdict = compatibility_classify(model, n_points=max(points, 50), seed=seed)
    if verdict.verdict != "Compatible":
        raise NotCompatible(f"model {model.name!r} is {verdict.verdict}: failed {verdict.failed} "
                            f"(residual {verdict.residual:.3g})")
    seeds = np.random.SeedSequence(seed).spawn(len(CHECK_IDS) + 1)
    pts = model.sample(points, np.random.default_rng(seeds[-1]))
    fr = frame_at(model, pts)
    ric_min = float(np.min(_ric_reeb(fr)))
    tp = verdict.theta_prime
    n = model.n
    B = tp / 2 + np.sqrt(max(n * tp ** 2 / 4 - ric_min / 2, 0.0))
    ctx = _Ctx(model, fr, pts, tp, ric_min, float(B), tol)

    def run(cid):
        rng = np.random.default_rng(seeds[CHECK_IDS.index(cid)])
        try:
            return CHECKS[cid](ctx, rng)
        except ContactRadiusError as exc:
            return CheckResult(cid, float("inf"), None, tol, False, [], 0, "identity", f"error: {exc}")

    return pmap(run, selected)
