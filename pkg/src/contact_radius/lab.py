"""Geodesics, Jacobi fields and the numerical probes built on them.

Everything is integrated along radial geodesics together with a parallel
orthonormal frame ``E``; Jacobi fields are carried as components in that
frame, so ``J = E j`` and ``J' = E j'`` with ``j'' = -M j``,
``M_ab = <E_a, R(E_b, u)u>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import ode
from .bounds import (BoundInputs, H1_of_r, H2_of_r, compute_constants, ct, radius_bounds,
                     transversality_radius)
from .contact import ContactModel, OrbitSeed, frame_at, reeb_at
from .errors import DomainError, LeftChartDomain, NotUnit, OrbitNotClosed, RadiusTooLarge
from .geometry import eval_components, point_geometry
from .parallel import pmap

RTOL = 1e-9
ATOL = 1e-12
H_MIN = 1e-9
STEPS_PER_LENGTH = 50
DIRECTION_CHUNK = 256
DEFAULT_GRID = (32, 16)
PROBE_TOL = 1e-6
CLOSURE_TOL = 1e-6
CLOSURE_FAIL = 1e-4
ORBIT_SAMPLES = 16


# ---- integration core ----------------------------------------------------------------

def _bundle_rhs(model, d, k):
    metric = model.metric

    def rhs(_t, y):
        m = y.shape[0]
        x, u = y[:, :d], y[:, d:2 * d]
        E = y[:, 2 * d:2 * d + d * d].reshape(m, d, d)
        model.chart.require(x)
        pg = point_geometry(metric, x, curvature=k > 0)
        du = -np.einsum("mkij,mi,mj->mk", pg.gamma, u, u)
        dE = -np.einsum("mkij,mi,mja->mka", pg.gamma, u, E)
        parts = [u, du, dE.reshape(m, -1)]
        if k:
            off = 2 * d + d * d
            j = y[:, off:off + d * k].reshape(m, d, k)
            jp = y[:, off + d * k:].reshape(m, d, k)
            # R(E_b, u)u, then components along the parallel frame
            RE = np.einsum("mlijk,mi,mjb,mk->mlb", pg.riemann, u, E, u)
            M = np.einsum("mia,mij,mjb->mab", E, pg.g, RE)
            parts += [jp.reshape(m, -1), (-M @ j).reshape(m, -1)]
        return np.concatenate(parts, axis=1)

    return rhs


@dataclass
class _Bundle:
    s: np.ndarray          # (S,)
    x: np.ndarray          # (m, S, d)
    u: np.ndarray          # (m, S, d)
    E: np.ndarray          # (m, S, d, d)
    j: np.ndarray | None   # (m, S, d, k) frame components
    jp: np.ndarray | None
    accepted: int
    rejected: int


def _integrate_bundle(model, p, dirs, E0, j0, jp0, length, s_eval, land_on_eval=False):
    """Integrate geodesics from ``p`` in directions ``dirs`` with a transported frame.

    ``p`` and ``E0`` are shared or given per direction.  ``j0``/``jp0`` are
    ``(d, k)`` initial Jacobi components shared by all directions (``k`` may be
    zero).  ``s_eval=None`` samples at the step nodes (single chunk only).
    Directions are processed in fixed chunks so the result never depends on
    the thread count.
    """
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    m_all, d = dirs.shape
    P = np.broadcast_to(np.asarray(p, dtype=float), (m_all, d))
    E = np.broadcast_to(np.asarray(E0, dtype=float), (m_all, d, d)).reshape(m_all, d * d)
    k = 0 if j0 is None else j0.shape[1]
    h_max = length / STEPS_PER_LENGTH
    y0 = [P, dirs, E]
    if k:
        y0 += [np.broadcast_to(j0.reshape(-1), (m_all, d * k)), np.broadcast_to(jp0.reshape(-1), (m_all, d * k))]
    y0 = np.concatenate(y0, axis=1)
    if s_eval is None and m_all > DIRECTION_CHUNK:
        raise ValueError("node sampling needs a single chunk")
    rhs = _bundle_rhs(model, d, k)

    def run(i):
        return ode.integrate(rhs, y0[i:i + DIRECTION_CHUNK], length, s_eval, RTOL, ATOL, h_max, H_MIN,
                             land_on_eval=land_on_eval)

    results = pmap(run, range(0, m_all, DIRECTION_CHUNK))
    Y = np.concatenate([np.swapaxes(r.y, 0, 1) for r in results], axis=0)  # (m, S, state)
    m, S = Y.shape[:2]
    off = 2 * d + d * d
    j = jp = None
    if k:
        j = Y[..., off:off + d * k].reshape(m, S, d, k)
        jp = Y[..., off + d * k:].reshape(m, S, d, k)
    return _Bundle(results[0].t, Y[..., :d], Y[..., d:2 * d], Y[..., 2 * d:off].reshape(m, S, d, d), j, jp,
                   sum(r.accepted for r in results), sum(r.rejected for r in results))


def _orthonormal_at(model, p):
    return point_geometry(model.metric, np.asarray(p, dtype=float), curvature=False).orthonormal_frame()


# ---- geodesics and Jacobi fields -----------------------------------------------------

@dataclass
class GeodesicPath:
    """Unit-speed geodesic sampled at arclengths ``s``."""

    model: ContactModel = field(repr=False)
    s: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    accepted: int
    rejected: int
    speed_drift: float

    @property
    def samples(self):
        return list(zip(self.s.tolist(), self.points, self.velocities))

    @property
    def start(self):
        return self.points[0]

    @property
    def direction(self):
        return self.velocities[0]

    @property
    def length(self) -> float:
        return float(self.s[-1])


def _check_unit(model, p, v):
    pg = point_geometry(model.metric, np.asarray(p, dtype=float), curvature=False)
    nv = float(pg.norm(np.asarray(v, dtype=float)))
    if abs(nv - 1.0) > 1e-9:
        raise NotUnit(f"initial velocity has norm {nv!r}, expected 1")
    return pg


def integrate_geodesic(model: ContactModel, p, v, length: float, n_samples: int | None = None) -> GeodesicPath:
    """Solve the geodesic equation from ``p`` with unit initial velocity ``v``.

    Samples are the accepted integrator steps unless ``n_samples`` asks for a
    uniform (interpolated) grid.
    """
    if not length > 0:
        raise ValueError("length must be positive")
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    model.chart.require(p)
    pg = _check_unit(model, p, v)
    s = None if n_samples is None else np.linspace(0.0, length, n_samples)
    b = _integrate_bundle(model, p, v[None, :], pg.orthonormal_frame(), None, None, length, s)
    x, u = b.x[0], b.u[0]
    speed = point_geometry(model.metric, x, curvature=False).norm(u)
    return GeodesicPath(model, b.s, x, u, b.accepted, b.rejected, float(np.max(np.abs(speed - 1.0))))


@dataclass
class JacobiSolution:
    """Jacobi field ``J`` and ``J' = nabla J`` as coordinate vectors along a path."""

    path: GeodesicPath = field(repr=False)
    J: np.ndarray
    Jp: np.ndarray
    J0: np.ndarray
    J0p: np.ndarray

    @property
    def s(self):
        return self.path.s

    def residual(self, s0: float, delta: float = 1e-2) -> float:
        """|J'' + R(J, u)u| at ``s0``, with J'' from finite differences of a fresh integration."""
        model = self.path.model
        L = self.path.length
        if not 4 * delta <= s0 <= L - 4 * delta:
            raise ValueError("s0 needs 4*delta of room on both sides")
        ks = np.arange(-4, 5)
        ss = s0 + ks * delta
        # every stencil node is a step node, so no interpolation error is differentiated
        sol = _jacobi_raw(model, self.path.start, self.path.direction, self.J0, self.J0p, ss[-1], ss, True)
        x, u, J = sol["x"], sol["u"], sol["J"]
        pg = point_geometry(model.metric, x)
        c5 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / (12 * delta)
        # W = nabla_u J at the five central nodes, then nabla_u W at s0
        W = []
        for i in range(2, 7):
            dJ = c5 @ J[i - 2:i + 3]
            W.append(dJ + np.einsum("kij,i,j->k", pg.gamma[i], u[i], J[i]))
        W = np.array(W)
        dW = c5 @ W
        acc = dW + np.einsum("kij,i,j->k", pg.gamma[4], u[4], W[2])
        curv = np.einsum("lijk,i,j,k->l", pg.riemann[4], u[4], J[4], u[4])   # R(J, u)u
        res = acc + curv
        return float(np.sqrt(res @ pg.g[4] @ res))


def _jacobi_raw(model, p, v, J0, J0p, length, s_eval, land_on_eval=False):
    E0 = _orthonormal_at(model, p)
    j0 = np.linalg.solve(E0, np.asarray(J0, dtype=float))[:, None]
    jp0 = np.linalg.solve(E0, np.asarray(J0p, dtype=float))[:, None]
    b = _integrate_bundle(model, p, np.asarray(v, dtype=float)[None, :], E0, j0, jp0, length, s_eval,
                          land_on_eval)
    E = b.E[0]
    return {"x": b.x[0], "u": b.u[0], "J": np.einsum("sia,sa->si", E, b.j[0][..., 0]),
            "Jp": np.einsum("sia,sa->si", E, b.jp[0][..., 0]), "bundle": b}


def jacobi_along(path: GeodesicPath, J0, J0p) -> JacobiSolution:
    """Jacobi field with ``J(0) = J0`` and ``J'(0) = J0p`` along ``path``."""
    raw = _jacobi_raw(path.model, path.start, path.direction, J0, J0p, path.length, path.s)
    return JacobiSolution(path, raw["J"], raw["Jp"], np.asarray(J0, dtype=float), np.asarray(J0p, dtype=float))


# ---- disks exp_p(D_xi(r)) -------------------------------------------------------------

def adapted_basis(model: ContactModel, p) -> np.ndarray:
    """Columns X_1, J X_1, ..., X_n, J X_n, n: orthonormal and adapted to J on xi_p."""
    fr = frame_at(model, np.asarray(p, dtype=float))
    pg = fr.geometry
    d, n = model.dim, model.n
    cols = []
    cand = pg.orthonormal_frame()
    nvec = fr.n_unit
    basis_pool = [cand[:, i] for i in range(d)]
    for _ in range(n):
        for w in basis_pool:
            w = w - pg.inner(w, nvec) * nvec
            for c in cols:
                w = w - pg.inner(w, c) * c
            nw = float(pg.norm(w))
            if nw > 1e-6:
                break
        X = w / nw
        Y = fr.apply(fr.phi, X)
        Y = Y - pg.inner(Y, X) * X
        for c in cols:
            Y = Y - pg.inner(Y, c) * c
        Y = Y / pg.norm(Y)
        cols += [X, Y]
    cols.append(nvec)
    return np.stack(cols, axis=-1)


def disk_directions(n: int, n_dirs: int, seed: int = 0) -> np.ndarray:
    """Unit coefficient vectors in R^{2n}: a regular polygon when n = 1."""
    if n_dirs < 1:
        raise ValueError("need at least one direction")
    if n == 1:
        th = 2 * np.pi * np.arange(n_dirs) / n_dirs
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    c = np.random.default_rng(seed).standard_normal((n_dirs, 2 * n))
    return c / np.linalg.norm(c, axis=1, keepdims=True)


def max_disk_radius(inputs: BoundInputs | None, inj: float | None) -> float:
    lim = math.inf
    inj = inputs.inj if inputs is not None else inj
    if inj is not None:
        lim = 0.5 * inj
    if inputs is not None and inputs.K_upper > 0:
        lim = min(lim, math.pi / (2 * math.sqrt(inputs.K_upper)))
    return lim


@dataclass
class DiskSample:
    """Radial samples of exp_p(D_xi(r)): ``[direction, radius]`` leading axes."""

    center: np.ndarray
    radius: float
    s: np.ndarray                 # (S,) with s[0] = 0
    coeffs: np.ndarray            # (D, 2n) direction coefficients in the adapted basis
    directions: np.ndarray        # (D, d) coordinate directions
    points: np.ndarray            # (D, S, d)
    velocities: np.ndarray        # (D, S, d)
    frames: np.ndarray            # (D, S, d, d) parallel orthonormal frames
    jac: np.ndarray               # (D, S, d, d) components of J_i, J'(0) = i-th basis vector
    jac_p: np.ndarray
    tangent: np.ndarray           # (D, S, d, 2n) coordinate vectors J_i/s (J'(0) at s = 0)
    normal: np.ndarray            # (D, S, d) unit normal n_D in coordinates
    normal_c: np.ndarray          # (D, S, d) same in frame components
    reeb_dot_normal: np.ndarray   # (D, S)
    gram_cond: np.ndarray         # (D, S)
    basis: np.ndarray             # (d, d) adapted basis at the center
    accepted: int = 0


def disk_frame(model: ContactModel, p, r: float, grid=DEFAULT_GRID, inputs: BoundInputs | None = None,
               seed: int = 0) -> DiskSample:
    """Sample exp_p of the radius-``r`` disk in xi_p with pushed-forward frames and normals."""
    return disk_frames(model, [p], r, grid, inputs, seed)[0]


def disk_frames(model: ContactModel, centers, r: float, grid=DEFAULT_GRID, inputs: BoundInputs | None = None,
                seed: int = 0) -> list[DiskSample]:
    """:func:`disk_frame` for several centers, integrated as one batch."""
    n_dirs, n_radii = grid
    if n_radii < 1:
        raise ValueError("need at least one radius")
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    model.chart.require(centers)
    lim = max_disk_radius(inputs, model.inj)
    if not 0 < r < lim:
        raise RadiusTooLarge(f"radius {r!r} must lie in (0, {lim!r})")
    d, n = model.dim, model.n
    coeffs = disk_directions(n, n_dirs, seed)
    bases = [adapted_basis(model, c) for c in centers]
    P = np.repeat(centers, n_dirs, axis=0)
    E0 = np.concatenate([np.broadcast_to(B, (n_dirs, d, d)) for B in bases])
    dirs = np.concatenate([coeffs @ B[:, :2 * n].T for B in bases])
    s = r * np.arange(n_radii + 1) / n_radii
    b = _integrate_bundle(model, P, dirs, E0, np.zeros((d, d)), np.eye(d), r, s)

    # X_i = J_i / s in frame components; at s = 0 it equals J_i'(0)
    Xc = np.empty_like(b.j[..., :2 * n])
    Xc[:, 0] = b.jp[:, 0, :, :2 * n]
    Xc[:, 1:] = b.j[:, 1:, :, :2 * n] / s[1:, None, None]
    U, _, _ = np.linalg.svd(Xc, full_matrices=True)
    nc = U[..., :, -1]
    # orient by continuity from the Reeb direction at the center
    prev = np.zeros((nc.shape[0], d))
    prev[:, -1] = 1.0
    for k in range(nc.shape[1]):
        sign = np.where(np.einsum("mi,mi->m", nc[:, k], prev) < 0, -1.0, 1.0)
        nc[:, k] *= sign[:, None]
        prev = nc[:, k]
    normal = np.einsum("mkia,mka->mki", b.E, nc)
    tangent = np.einsum("mkia,mkab->mkib", b.E, Xc)
    reeb = reeb_at(model, b.x)
    rn = point_geometry(model.metric, b.x, curvature=False).inner(reeb, normal)
    cond = np.linalg.cond(np.swapaxes(Xc, -1, -2) @ Xc)
    out = []
    for i, c in enumerate(centers):
        sl = slice(i * n_dirs, (i + 1) * n_dirs)
        out.append(DiskSample(c, float(r), s, coeffs, dirs[sl], b.x[sl], b.u[sl], b.E[sl], b.j[sl], b.jp[sl],
                              tangent[sl], normal[sl], nc[sl], rn[sl], cond[sl], bases[i], b.accepted))
    return out


# ---- probe reports -------------------------------------------------------------------

@dataclass
class ProbeReport:
    probe_id: str
    radius: float
    samples: int
    margin_min: float
    worst: tuple[int, float]
    passed: bool
    tolerance: float
    margins: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    rows: list = field(default_factory=list, repr=False)   # (dir_index, s, margin)

    def to_dict(self) -> dict:
        return {
            "probe_id": self.probe_id,
            "radius": self.radius,
            "samples": self.samples,
            "margin_min": self.margin_min,
            "worst": {"direction": self.worst[0], "s": self.worst[1]},
            "pass": self.passed,
            "tolerance": self.tolerance,
            "margins": dict(self.margins),
            "details": dict(self.details),
        }

    def csv_text(self) -> str:
        lines = ["dir_index,s,margin"]
        lines += [f"{i},{s!r},{m!r}" for i, s, m in self.rows]
        return "\n".join(lines) + "\n"


def _report(probe_id, r, s, table, tol, margins=None, details=None):
    """Build a report from ``table[direction, radius]`` of per-sample margins."""
    table = np.asarray(table, dtype=float)
    i, k = np.unravel_index(int(np.argmin(table)), table.shape)
    mm = float(table[i, k])
    rows = [(int(a), float(s[b]), float(table[a, b])) for a in range(table.shape[0]) for b in range(table.shape[1])]
    return ProbeReport(probe_id, float(r), int(table.size), mm, (int(i), float(s[k])), bool(mm >= -tol), tol,
                       margins or {}, details or {}, rows)


def _inputs(model, inputs):
    if inputs is None:
        from .models import model_bound_inputs
        inputs = model_bound_inputs(model)
    return inputs


def _require_below(r, bound, name):
    if not r < bound:
        raise RadiusTooLarge(f"radius {r!r} must be below {name} = {bound!r}")


# ---- probes ----------------------------------------------------------------------------

def twisting_probe(model: ContactModel, p, r: float, grid=DEFAULT_GRID, A: float | None = None,
                   B: float | None = None, inputs: BoundInputs | None = None, tol: float = PROBE_TOL,
                   seed: int = 0) -> ProbeReport:
    """Margins <R, n_D> - (1 - B s - A s^2/2) over the disk samples."""
    inputs = _inputs(model, inputs)
    k = compute_constants(inputs)
    A = k.A if A is None else float(A)
    B = k.B if B is None else float(B)
    r_perp = transversality_radius(inputs.inj, k.A, k.B)
    _require_below(r, r_perp, "r_perp")
    disk = disk_frame(model, p, r, grid, inputs, seed)
    s = disk.s[1:]
    margin = disk.reeb_dot_normal[:, 1:] - (1.0 - B * s - 0.5 * A * s * s)
    rep = _report("twisting", r, s, margin, tol, details={"A": A, "B": B, "r_perp": r_perp})
    rep.margins = {"twisting": rep.margin_min,
                   "reeb_dot_normal_min": float(np.min(disk.reeb_dot_normal))}
    return rep


def jacobi_bound_probe(model: ContactModel, p, r: float, grid=DEFAULT_GRID, inputs: BoundInputs | None = None,
                       tol: float = PROBE_TOL, seed: int = 0) -> ProbeReport:
    """|X| <= H1(s), |nabla X| <= H2(s) and <n_D, J'> <= 4/3 |sec| s along radial geodesics."""
    inputs = _inputs(model, inputs)
    disk = disk_frame(model, p, r, grid, inputs, seed)
    n, d = model.n, model.dim
    s = disk.s[1:]
    J, Jp = disk.jac[:, 1:], disk.jac_p[:, 1:]
    X = J / s[:, None, None]
    dX = (Jp - X) / s[:, None, None]
    h1 = np.array([H1_of_r(t, inputs.kappa) for t in s])
    h2 = np.array([H2_of_r(t, inputs.kappa, inputs.sec_abs) for t in s])
    m1 = h1 - np.linalg.norm(X, ord=2, axis=(-2, -1))
    m2 = h2 - np.linalg.norm(dX, ord=2, axis=(-2, -1))

    # fields with J'(0) in xi_p orthogonal to the direction, orthonormalised at s
    m3 = np.full(m1.shape, np.inf)
    if n >= 1:
        nc = disk.normal_c[:, 1:]
        for a, c in enumerate(disk.coeffs):
            W = np.linalg.svd(c[None, :], full_matrices=True)[2][1:].T   # (2n, 2n-1)
            Jx = J[a][..., :2 * n] @ W
            Jpx = Jp[a][..., :2 * n] @ W
            q, rr = np.linalg.qr(Jx)
            Jp_on = Jpx @ np.linalg.inv(rr)
            vals = np.abs(np.einsum("ki,kib->kb", nc[a], Jp_on))
            m3[a] = 4.0 / 3.0 * inputs.sec_abs * s - np.max(vals, axis=-1)
    table = np.minimum(np.minimum(m1, m2), m3)
    rep = _report("jacobi", r, s, table, tol)
    rep.margins = {"X_norm": float(np.min(m1)), "nabla_X_norm": float(np.min(m2)),
                   "normal_derivative": float(np.min(m3))}
    rep.details = {"kappa": inputs.kappa, "sec_abs": inputs.sec_abs}
    return rep


def hessian_distance_probe(model: ContactModel, p, r: float, grid=DEFAULT_GRID,
                           inputs: BoundInputs | None = None, tol: float = PROBE_TOL,
                           seed: int = 0) -> ProbeReport:
    """min over unit J'(0) orthogonal to the geodesic of <J', J> - ct_K(s)|J|^2."""
    inputs = _inputs(model, inputs)
    K = inputs.K_upper
    disk = disk_frame(model, p, r, grid, inputs, seed)
    n, d = model.n, model.dim
    s = disk.s[1:]
    cts = np.array([ct(K, t) for t in s])
    table = np.empty((disk.coeffs.shape[0], s.size))
    table_max = np.empty_like(table)
    for a, c in enumerate(disk.coeffs):
        v = np.zeros(d)
        v[:2 * n] = c
        W = np.linalg.svd(v[None, :], full_matrices=True)[2][1:].T   # (d, d-1)
        Jw = disk.jac[a, 1:] @ W
        Jpw = disk.jac_p[a, 1:] @ W
        G = np.swapaxes(Jpw, -1, -2) @ Jw
        form = 0.5 * (G + np.swapaxes(G, -1, -2)) - cts[:, None, None] * (np.swapaxes(Jw, -1, -2) @ Jw)
        ev = np.linalg.eigvalsh(form)
        table[a] = ev[:, 0]
        table_max[a] = ev[:, -1]
    rep = _report("hessian", r, s, table, tol, details={"K": K})
    rep.margins = {"hessian": rep.margin_min, "hessian_max": float(np.max(table_max))}
    return rep


def _dalpha_at(model, x):
    _, da = eval_components(list(model.alpha), x, 1)
    return np.swapaxes(da, -1, -2) - da   # (d alpha)_ij = d_i a_j - d_j a_i


def taming_probe(model: ContactModel, p, r: float, grid=DEFAULT_GRID, inputs: BoundInputs | None = None,
                 tol: float = PROBE_TOL, seed: int = 0) -> ProbeReport:
    """F-values (1/theta') d alpha on the pushed-forward symplectic basis, and the taming ratio."""
    inputs = _inputs(model, inputs)
    consts = compute_constants(inputs)
    H = consts.Hbar
    tp = inputs.theta_prime
    disk = disk_frame(model, p, r, grid, inputs, seed)
    n = model.n
    s = disk.s
    F = np.einsum("mkia,mkij,mkjb->mkab", disk.tangent, _dalpha_at(model, disk.points), disk.tangent) / tp
    diag_idx = [(2 * i, 2 * i + 1) for i in range(n)]
    diag = np.stack([F[..., a, b] for a, b in diag_idx], axis=-1)
    m_diag = np.min(diag, axis=-1) - (1.0 - H * s)
    off_pairs = [(a, b) for a in range(2 * n) for b in range(a + 1, 2 * n) if (a, b) not in diag_idx]
    if off_pairs:
        off = np.max(np.stack([np.abs(F[..., a, b]) for a, b in off_pairs], axis=-1), axis=-1)
    else:
        off = np.zeros(m_diag.shape)
    m_off = H * s - off
    # J_* sends X_i to Y_i and Y_i to -X_i; d alpha(u, J_* u) is a quadratic form in (a, b)
    J0 = np.zeros((2 * n, 2 * n))
    for a, b in diag_idx:
        J0[b, a] = 1.0
        J0[a, b] = -1.0
    form = F @ J0
    ratio = np.linalg.eigvalsh(0.5 * (form + np.swapaxes(form, -1, -2)))[..., 0]
    # at s = 0 the frame is the symplectic basis itself, so only s > 0 carries information
    table = np.minimum(np.minimum(m_diag, m_off), ratio)[:, 1:]
    rep = _report("taming", r, s[1:], table, tol)
    rep.margins = {"diagonal": float(np.min(m_diag[:, 1:])), "offdiagonal": float(np.min(m_off[:, 1:])),
                   "taming_ratio": float(np.min(ratio)),
                   "F_diag_min": float(np.min(diag)), "F_offdiag_max": float(np.max(off)),
                   "F_diag_at_center": float(np.max(np.abs(diag[:, 0] - 1.0))),
                   "F_offdiag_at_center": float(np.max(off[:, 0]))}
    rep.details = {"Hbar": H, "theta_prime": tp, "r_tau": radius_bounds(inputs).r_tau}
    return rep


def levi_probe(model: ContactModel, p, r: float, grid=DEFAULT_GRID, inputs: BoundInputs | None = None,
               tol: float = PROBE_TOL, seed: int = 0) -> ProbeReport:
    """Levi-form and A/B identities at the sampled points of the disk around ``p``."""
    from .identities import levi_AB, levi_samples, levi_test_functions, _rel, _wnorm
    inputs = _inputs(model, inputs)
    disk = disk_frame(model, p, r, grid, inputs, seed)
    D, S1 = disk.points.shape[:2]
    pts = disk.points.reshape(-1, model.dim)
    fr = frame_at(model, pts)
    rng = np.random.default_rng(seed)
    res = np.zeros(pts.shape[0])
    for f in levi_test_functions(model, rng):
        for L, Hs, _defect, valid in levi_samples(fr, f, model, rng, count=2):
            res = np.maximum(res, np.where(valid, _rel(np.abs(L - Hs), L, Hs), 0.0))
    tp = inputs.theta_prime
    res_ab = np.zeros(pts.shape[0])
    for _ in range(2):
        A, B, V = levi_AB(fr, rng.standard_normal(pts.shape))
        vv = fr.geometry.inner(V, V)
        A_exp = np.zeros_like(A)
        A_exp[..., -1] = -tp * vv
        B_exp = np.concatenate([-tp * V, np.zeros(V.shape[:-1] + (1,))], axis=-1)
        res_ab = np.maximum(res_ab, _rel(_wnorm(fr, A - A_exp), _wnorm(fr, A), vv * tp))
        res_ab = np.maximum(res_ab, _rel(_wnorm(fr, B - B_exp), _wnorm(fr, B), tp * np.sqrt(vv)))
    table = -np.maximum(res, res_ab).reshape(D, S1)
    rep = _report("levi", r, disk.s, table, tol)
    rep.margins = {"levi_residual": float(np.max(res)), "levi_AB_residual": float(np.max(res_ab))}
    return rep


PROBES = {
    "twisting": twisting_probe,
    "taming": taming_probe,
    "jacobi": jacobi_bound_probe,
    "hessian": hessian_distance_probe,
    "levi": levi_probe,
}


# ---- Reeb orbits and tubes -------------------------------------------------------------

@dataclass
class ReebOrbit:
    t: np.ndarray
    points: np.ndarray
    period: float
    defect: float


def integrate_reeb_orbit(model: ContactModel, seed: OrbitSeed, n_samples: int = ORBIT_SAMPLES + 1) -> ReebOrbit:
    """Follow the Reeb flow for one period and measure how far it misses the start."""
    if seed.period is None or not seed.period > 0:
        raise OrbitNotClosed("orbit seed has no known period")
    T = float(seed.period)
    x0 = np.asarray(seed.point, dtype=float)

    def rhs(_t, y):
        model.chart.require(y)
        return reeb_at(model, y)

    t = np.linspace(0.0, T, n_samples)
    try:
        sol = ode.integrate(rhs, x0[None, :], T, t, RTOL, ATOL, T / STEPS_PER_LENGTH, H_MIN)
    except (LeftChartDomain, DomainError) as exc:
        raise OrbitNotClosed(f"Reeb orbit does not close inside the chart: {exc}") from None
    pts = sol.y[:, 0, :]
    pg = point_geometry(model.metric, x0, curvature=False)
    gap = pts[-1] - x0
    defect = float(np.sqrt(gap @ pg.g @ gap))
    if defect > CLOSURE_FAIL:
        raise OrbitNotClosed(f"closure defect {defect:.3g} after period {T!r}")
    return ReebOrbit(t, pts, T, defect)


def reeb_tube_probe(model: ContactModel, orbit_seed: OrbitSeed | None, r: float, grid=DEFAULT_GRID,
                    inputs: BoundInputs | None = None, tol: float = PROBE_TOL, seed: int = 0,
                    n_orbit: int = ORBIT_SAMPLES) -> ProbeReport:
    """Transversality of the Reeb field to normal disks along a closed Reeb orbit."""
    if orbit_seed is None:
        raise OrbitNotClosed(f"model {model.name!r} has no closed Reeb orbit seeds")
    inputs = _inputs(model, inputs)
    k = compute_constants(inputs)
    r_perp = transversality_radius(inputs.inj, k.A, k.B)
    tube = max_disk_radius(inputs, model.inj)
    _require_below(r, tube, "the tube embedding radius")
    _require_below(r, r_perp, "r_perp")
    orbit = integrate_reeb_orbit(model, orbit_seed, n_orbit + 1)
    disks = disk_frames(model, orbit.points[:-1], r, grid, inputs, seed)
    s = disks[0].s[1:]
    rn = np.concatenate([dk.reeb_dot_normal[:, 1:] for dk in disks])   # orbit point major, then direction
    rn_min = float(np.min(rn))
    table = rn - (1.0 - k.B * s - 0.5 * k.A * s * s)
    dirs = grid[0]
    rep = _report("tube", r, s, table, tol)
    rep.margins = {"twisting": rep.margin_min, "reeb_dot_normal_min": rn_min,
                   "closure_defect": orbit.defect}
    rep.details = {"period": orbit.period, "orbit_samples": n_orbit, "directions_per_disk": dirs,
                   "closed": orbit.defect < CLOSURE_TOL}
    if orbit.defect >= CLOSURE_TOL:
        rep.passed = False
    return rep
