"""Chart-level Riemannian geometry evaluated from metric jets.

Index conventions used throughout the package:

* ``dg[..., i, j, k] = d_k g_ij``
* ``gamma[..., k, i, j] = Gamma^k_ij``
* ``riemann[..., l, i, j, k]`` is the ``d_l`` component of ``R(d_j, d_k) d_i``
  with ``R(X, Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z``.

Every function accepts a single point ``(d,)`` or a batch ``(..., d)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegeneratePlane, NotPositiveDefinite, NotUnit, OutsideChart
from .expr import Expression, eval_jet, eval_jets, parse


@dataclass(frozen=True)
class Chart:
    coords: tuple[str, ...]
    domain: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.coords) < 2:
            raise ValueError("a chart needs at least two coordinates")
        if len(self.domain) != len(self.coords):
            raise ValueError("one domain interval per coordinate is required")
        for lo, hi in self.domain:
            if not lo < hi:
                raise ValueError(f"empty domain interval ({lo}, {hi})")

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.domain])

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.domain])

    def contains(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return np.all((pts > self.lower) & (pts < self.upper), axis=-1)

    def require(self, points):
        inside = self.contains(points)
        if not np.all(inside):
            pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
            bad = pts[~np.asarray(inside).reshape(-1)][0]
            raise OutsideChart(f"point {bad.tolist()} outside chart domain")

    def parse(self, text: str) -> Expression:
        return parse(text, self.coords)


def eval_components(exprs, points, order: int):
    """Stack jets of an array of expressions.

    Returns ``(values, d1, d2)`` with derivative axes trailing; constant
    expressions are short-circuited.
    """
    pts = np.asarray(points, dtype=float)
    batch = pts.shape[:-1]
    d = pts.shape[-1]
    shape = np.shape(exprs)
    flat = list(np.ravel(np.asarray(exprs, dtype=object)))
    vals = np.zeros(batch + (len(flat),))
    d1 = np.zeros(batch + (len(flat), d)) if order >= 1 else None
    d2 = np.zeros(batch + (len(flat), d, d)) if order >= 2 else None
    varying = [k for k, e in enumerate(flat) if not e.is_constant()]
    jets = dict(zip(varying, eval_jets([flat[k] for k in varying], pts, order)))
    for k, e in enumerate(flat):
        if k not in jets:
            vals[..., k] = eval_jet(e, np.zeros(d), 0).value
            continue
        jet = jets[k]
        vals[..., k] = jet.value
        if order >= 1:
            d1[..., k, :] = jet.grad
        if order >= 2:
            d2[..., k, :, :] = jet.hess
    out = [vals.reshape(batch + shape)]
    if order >= 1:
        out.append(d1.reshape(batch + shape + (d,)))
    if order >= 2:
        out.append(d2.reshape(batch + shape + (d, d)))
    return tuple(out)


@dataclass(frozen=True)
class MetricField:
    """Symmetric matrix of component expressions (upper triangle stored)."""

    chart: Chart
    upper: tuple[tuple[Expression, ...], ...]

    @classmethod
    def from_strings(cls, chart: Chart, rows: Sequence[Sequence[str]]) -> "MetricField":
        """Accept a full square matrix or the upper triangle (row i has d - i entries)."""
        d = chart.dim
        upper = []
        for i in range(d):
            row = rows[i]
            if len(row) == d:
                entries = row[i:]
            elif len(row) == d - i:
                entries = row
            else:
                raise ValueError(f"metric row {i} has {len(row)} entries")
            upper.append(tuple(chart.parse(t) for t in entries))
        return cls(chart, tuple(upper))

    def component(self, i: int, j: int) -> Expression:
        if i > j:
            i, j = j, i
        return self.upper[i][j - i]

    def matrix(self):
        d = self.chart.dim
        return [[self.component(i, j) for j in range(d)] for i in range(d)]

    def jets(self, points, order: int = 2):
        return eval_components(self.matrix(), points, order)


@dataclass(frozen=True)
class PointGeometry:
    point: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    dg: np.ndarray
    gamma: np.ndarray
    riemann: np.ndarray | None = None
    d2g: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.g.shape[-1]

    def inner(self, u, v):
        return np.einsum("...i,...ij,...j->...", u, self.g, v)

    def norm(self, u):
        return np.sqrt(self.inner(u, u))

    def lower(self, u):
        return np.einsum("...ij,...j->...i", self.g, u)

    def raise_index(self, w):
        return np.einsum("...ij,...j->...i", self.g_inv, w)

    def covariant(self, u, v, dv):
        """nabla_u V at the point, where ``dv[..., i, k] = d_k V^i``."""
        return (np.einsum("...k,...ik->...i", u, dv)
                + np.einsum("...kij,...i,...j->...k", self.gamma, u, v))

    def curvature(self, u, v, w):
        """R(u, v)w."""
        return np.einsum("...lijk,...i,...j,...k->...l", self.riemann, w, u, v)

    def riemann_lowered(self):
        """R_{abcd} = <R(d_c, d_d) d_b, d_a>."""
        return np.einsum("...al,...lbcd->...abcd", self.g, self.riemann)

    def orthonormal_frame(self):
        """Columns form a g-orthonormal basis (inverse transpose of Cholesky factor)."""
        L = np.linalg.cholesky(self.g)
        return np.swapaxes(np.linalg.inv(L), -1, -2)


def _christoffel(g_inv, dg):
    # Gamma^k_ij = 1/2 g^kl (d_i g_jl + d_j g_il - d_l g_ij)
    term = (np.einsum("...jli->...lij", dg) + np.einsum("...ilj->...lij", dg)
            - np.einsum("...ijl->...lij", dg))
    return 0.5 * np.einsum("...kl,...lij->...kij", g_inv, term)


def _riemann(g_inv, dg, d2g, gamma):
    # d_m Gamma^k_ij
    term = (np.einsum("...jli->...lij", dg) + np.einsum("...ilj->...lij", dg)
            - np.einsum("...ijl->...lij", dg))
    dterm = (np.einsum("...jlim->...lijm", d2g) + np.einsum("...iljm->...lijm", d2g)
             - np.einsum("...ijlm->...lijm", d2g))
    dginv = -np.einsum("...ka,...abm,...bl->...klm", g_inv, dg, g_inv)
    dgamma = 0.5 * (np.einsum("...klm,...lij->...kijm", dginv, term)
                    + np.einsum("...kl,...lijm->...kijm", g_inv, dterm))
    # R^l_{ijk} = d_j Gamma^l_ki - d_k Gamma^l_ji + Gamma^l_jm Gamma^m_ki - Gamma^l_km Gamma^m_ji
    riem = (np.einsum("...lkij->...lijk", dgamma) - np.einsum("...ljik->...lijk", dgamma)
            + np.einsum("...ljm,...mki->...lijk", gamma, gamma)
            - np.einsum("...lkm,...mji->...lijk", gamma, gamma))
    return riem


def point_geometry(metric: MetricField, p, curvature: bool = True) -> PointGeometry:
    """Metric, inverse, Christoffel symbols and (optionally) curvature at ``p``."""
    pts = np.asarray(p, dtype=float)
    metric.chart.require(pts)
    order = 2 if curvature else 1
    jets = metric.jets(pts, order)
    g, dg = jets[0], jets[1]
    d2g = jets[2] if curvature else None
    try:
        np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        flat_pts = pts.reshape(-1, pts.shape[-1])
        flat_g = g.reshape(-1, g.shape[-2], g.shape[-1])
        for q, gq in zip(flat_pts, flat_g):
            if np.any(np.linalg.eigvalsh(gq) <= 0):
                raise NotPositiveDefinite(q) from None
        raise NotPositiveDefinite(flat_pts[0]) from None
    g_inv = np.linalg.inv(g)
    g_inv = 0.5 * (g_inv + np.swapaxes(g_inv, -1, -2))
    gamma = _christoffel(g_inv, dg)
    riem = _riemann(g_inv, dg, d2g, gamma) if curvature else None
    return PointGeometry(pts, g, g_inv, dg, gamma, riem, d2g)


def sectional(pg: PointGeometry, u, v):
    """Sectional curvature of the plane spanned by ``u`` and ``v``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    uu, vv, uv = pg.inner(u, u), pg.inner(v, v), pg.inner(u, v)
    gram = uu * vv - uv * uv
    if np.any(gram < 1e-12 * uu * vv):
        raise DegeneratePlane("vectors span a degenerate plane")
    num = pg.inner(pg.curvature(u, v, v), u)
    return num / gram


def ricci_direction(pg: PointGeometry, v):
    """Ric(v, v) for a unit vector, as a sum of sectional curvatures."""
    v = np.asarray(v, dtype=float)
    if np.any(np.abs(pg.norm(v) - 1.0) > 1e-9):
        raise NotUnit("ricci_direction needs a unit vector")
    basis = orthonormal_completion(pg, v)
    total = 0.0
    for k in range(basis.shape[-1] - 1):
        total = total + sectional(pg, v, basis[..., k + 1])
    return total


def orthonormal_completion(pg: PointGeometry, v):
    """g-orthonormal basis (as columns) whose first column is ``v / |v|``."""
    d = pg.dim
    v = np.asarray(v, dtype=float)
    batch = v.shape[:-1]
    cols = [v / pg.norm(v)[..., None]]
    cand = np.broadcast_to(np.eye(d), batch + (d, d))
    k = 0
    while len(cols) < d:
        w = cand[..., :, k].copy()
        for c in cols:
            w = w - pg.inner(w, c)[..., None] * c
        nw = pg.norm(w)
        k += 1
        if np.any(nw < 1e-8):
            if k >= d:
                raise DegeneratePlane("could not complete the basis")
            continue
        cols.append(w / nw[..., None])
    return np.stack(cols, axis=-1)


def sample_points(chart: Chart, n: int, rng: np.random.Generator, box=None) -> np.ndarray:
    """Uniform points in ``box`` (default: the chart domain shrunk by 5%)."""
    if box is None:
        lo, hi = chart.lower, chart.upper
        pad = 0.05 * (hi - lo)
        lo, hi = lo + pad, hi - pad
    else:
        lo = np.array([b[0] for b in box])
        hi = np.array([b[1] for b in box])
    return lo + (hi - lo) * rng.random((n, chart.dim))


def sec_range_estimate(metric: MetricField, n_points: int, n_planes: int, seed: int = 0,
                       box=None) -> tuple[float, float]:
    """Min and max sectional curvature over random points and planes.

    This is an estimate from samples and never a certified bound.
    """
    if n_points < 1 or n_planes < 1:
        raise ValueError("need at least one point and one plane")
    rng = np.random.default_rng(seed)
    pts = sample_points(metric.chart, n_points, rng, box)
    pg = point_geometry(metric, pts)
    d = metric.chart.dim
    lo, hi = np.inf, -np.inf
    for _ in range(n_planes):
        u = rng.standard_normal((n_points, d))
        v = rng.standard_normal((n_points, d))
        k = sectional(pg, u, v)
        lo = min(lo, float(np.min(k)))
        hi = max(hi, float(np.max(k)))
    # coordinate planes make extremes along distinguished directions visible
    for a in range(d):
        for b in range(a + 1, d):
            u = np.zeros((n_points, d))
            v = np.zeros((n_points, d))
            u[:, a] = 1.0
            v[:, b] = 1.0
            k = sectional(pg, u, v)
            lo = min(lo, float(np.min(k)))
            hi = max(hi, float(np.max(k)))
    if d == 3:
        # in dimension 3 the plane orthogonal to a unit N has curvature scal/2 - Ric(N, N),
        # so the pointwise extremes come from the Ricci eigenvalues
        E = pg.orthonormal_frame()
        ric = np.einsum("...lilk->...ik", pg.riemann)
        ric = 0.5 * (ric + np.swapaxes(ric, -1, -2))
        ric_on = np.swapaxes(E, -1, -2) @ ric @ E
        ev = np.linalg.eigvalsh(ric_on)
        half_scal = 0.5 * ev.sum(axis=-1, keepdims=True)
        k = half_scal - ev
        lo = min(lo, float(np.min(k)))
        hi = max(hi, float(np.max(k)))
    return lo, hi
