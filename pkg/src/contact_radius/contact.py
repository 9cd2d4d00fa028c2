"""Contact-metric tensors at a point: Reeb field, phi, h, II, torsion."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import NotCompatible, NotContact, NotInXi
from .expr import Expression
from .geometry import Chart, MetricField, PointGeometry, eval_components, point_geometry, sample_points

NULLSPACE_GAP = 1e-10


@dataclass(frozen=True)
class OrbitSeed:
    point: tuple[float, ...]
    period: float | None = None


@dataclass(frozen=True)
class ContactModel:
    """Chart, contact form, metric and metadata of a contact metric manifold."""

    name: str
    chart: Chart
    alpha: tuple[Expression, ...]
    metric: MetricField
    j_field: tuple[tuple[Expression, ...], ...] | None = None
    inj: float | None = None
    conv: float | None = None
    orbits: tuple[OrbitSeed, ...] = ()
    flags: tuple[str, ...] = ()
    # box that random samples are drawn from; None means the shrunk chart domain
    sample_box: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        d = self.chart.dim
        if d % 2 == 0:
            raise ValueError("contact manifolds have odd dimension")
        if len(self.alpha) != d:
            raise ValueError("alpha needs one component per coordinate")
        if self.metric.chart.dim != d:
            raise ValueError("metric chart dimension mismatch")

    @property
    def dim(self) -> int:
        return self.chart.dim

    @property
    def n(self) -> int:
        return (self.chart.dim - 1) // 2

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return sample_points(self.chart, count, rng, self.sample_box)


@dataclass(frozen=True)
class ContactFrame:
    """Every pointwise tensor of the contact metric structure.

    Arrays carry the leading batch axes of the evaluation points.  Derivative
    indices are trailing: ``dreeb[..., i, k] = d_k R^i`` and
    ``dphi[..., i, j, k] = d_k phi^i_j``.
    """

    geometry: PointGeometry
    alpha: np.ndarray
    dalpha: np.ndarray
    reeb: np.ndarray
    rho: np.ndarray
    n_unit: np.ndarray
    c: np.ndarray
    theta_prime: np.ndarray
    phi: np.ndarray
    h: np.ndarray
    II: np.ndarray
    proj: np.ndarray
    dalpha_cov: np.ndarray = field(repr=False)
    ddalpha: np.ndarray = field(repr=False)
    dreeb: np.ndarray = field(repr=False)
    dn: np.ndarray = field(repr=False)
    dphi: np.ndarray = field(repr=False)
    dproj: np.ndarray = field(repr=False)
    j_residual: np.ndarray | None = None

    @property
    def point(self):
        return self.geometry.point

    @property
    def J(self):
        return self.phi

    @property
    def dim(self) -> int:
        return self.reeb.shape[-1]

    @property
    def n(self) -> int:
        return (self.dim - 1) // 2

    # ---- pointwise operations -------------------------------------------

    def alpha_of(self, v):
        return np.einsum("...i,...i->...", self.alpha, v)

    def dalpha_of(self, u, v):
        return np.einsum("...i,...ij,...j->...", u, self.dalpha, v)

    def apply(self, tensor, v):
        return np.einsum("...ij,...j->...i", tensor, v)

    def xi_part(self, v):
        """g-orthogonal projection onto the complement of the normal."""
        return self.apply(self.proj, v)

    def random_xi(self, rng: np.random.Generator, count: int | None = None):
        """Random vectors in ker(alpha) at every batch point."""
        shape = self.reeb.shape if count is None else (count,) + self.reeb.shape
        w = rng.standard_normal(shape)
        return w - self.alpha_of(w)[..., None] * self.reeb

    def nabla_reeb(self, u):
        """nabla_u R."""
        return self.geometry.covariant(u, self.reeb, self.dreeb)

    def nabla_n(self, u):
        return self.geometry.covariant(u, self.n_unit, self.dn)

    def nabla_phi(self, u):
        """Matrix of nabla_u phi."""
        gam = self.geometry.gamma
        t = (self.dphi + np.einsum("...ikl,...lj->...ijk", gam, self.phi)
             - np.einsum("...lkj,...il->...ijk", gam, self.phi))
        return np.einsum("...ijk,...k->...ij", t, u)

    def torsion_tensor(self):
        """Components N^i_jk of the Nijenhuis torsion of phi."""
        phi, dphi = self.phi, self.dphi
        return (np.einsum("...lj,...ikl->...ijk", phi, dphi)
                - np.einsum("...lk,...ijl->...ijk", phi, dphi)
                + np.einsum("...il,...ljk->...ijk", phi, dphi)
                - np.einsum("...il,...lkj->...ijk", phi, dphi))

    def torsion(self, v, w):
        return np.einsum("...ijk,...j,...k->...i", self.torsion_tensor(), v, w)

    def xi_field(self, w):
        """Value and derivative of the contact-plane field P w (w constant)."""
        return self.apply(self.proj, w), np.einsum("...ijk,...j->...ik", self.dproj, w)

    def phi_field(self, v, dv):
        """Value and derivative of phi V for a field V with derivative dv."""
        return (self.apply(self.phi, v),
                np.einsum("...ijk,...j->...ik", self.dphi, v) + np.einsum("...ij,...jk->...ik", self.phi, dv))

    def lie_reeb(self, v, dv):
        """[R, V] for a vector field with ``dv[..., i, k] = d_k V^i``."""
        return (np.einsum("...k,...ik->...i", self.reeb, dv)
                - np.einsum("...k,...ik->...i", v, self.dreeb))


def _null_vector(mat, points):
    """Unit null vector of each antisymmetric matrix, with a rank check."""
    u, s, vt = np.linalg.svd(mat)
    d = mat.shape[-1]
    rank_needed = d - 1
    top = s[..., 0]
    weak = s[..., rank_needed - 1] <= NULLSPACE_GAP * np.maximum(top, 1e-300)
    if np.any(weak):
        idx = np.argwhere(np.atleast_1d(weak))[0]
        p = np.asarray(points).reshape(-1, d)[idx[0] if idx.size else 0]
        raise NotContact(p, "(d alpha has rank below 2n)")
    return vt[..., -1, :]


def _reeb_and_derivative(alpha, dalpha_cov, d2alpha, points):
    """Reeb vector and its coordinate derivatives.

    ``dalpha_cov[..., j, k] = d_k alpha_j``; ``d2alpha[..., j, k, m]``.
    """
    da = np.swapaxes(dalpha_cov, -1, -2) - dalpha_cov  # (d alpha)_ij = d_i a_j - d_j a_i
    null = _null_vector(da, points)
    scale = np.einsum("...i,...i->...", alpha, null)
    a_norm = np.linalg.norm(alpha, axis=-1) * np.linalg.norm(null, axis=-1)
    if np.any(np.abs(scale) <= NULLSPACE_GAP * np.maximum(a_norm, 1e-300)):
        bad = np.argwhere(np.atleast_1d(np.abs(scale) <= NULLSPACE_GAP * a_norm))[0]
        p = np.asarray(points).reshape(-1, alpha.shape[-1])[bad[0] if bad.size else 0]
        raise NotContact(p, "(alpha vanishes on the kernel of d alpha)")
    reeb = null / scale[..., None]
    # d_k (d alpha)_ij = d_k d_i a_j - d_k d_j a_i
    dda = np.einsum("...jik->...ijk", d2alpha) - d2alpha
    # differentiate [d alpha; alpha] R = e_last and solve in the least-squares sense
    M = np.concatenate([da, alpha[..., None, :]], axis=-2)
    dM = np.concatenate([dda, dalpha_cov[..., None, :, :]], axis=-3)
    rhs = -np.einsum("...abk,...b->...ak", dM, reeb)
    dreeb = np.linalg.pinv(M) @ rhs
    return da, dda, reeb, dreeb


def reeb_at(model: ContactModel, p) -> np.ndarray:
    """Reeb vector field: alpha(R) = 1 and d alpha(R, .) = 0."""
    pts = np.asarray(p, dtype=float)
    model.chart.require(pts)
    a, da = eval_components(list(model.alpha), pts, 1)
    d = model.dim
    dmat = np.swapaxes(da, -1, -2) - da
    null = _null_vector(dmat, pts)
    scale = np.einsum("...i,...i->...", a, null)
    a_norm = np.linalg.norm(a, axis=-1)
    if np.any(np.abs(scale) <= NULLSPACE_GAP * np.maximum(a_norm, 1e-300)):
        raise NotContact(pts.reshape(-1, d)[0], "(alpha vanishes on the kernel of d alpha)")
    return null / scale[..., None]


def _user_phi(model, pts, proj, dproj):
    J, dJ = eval_components([list(r) for r in model.j_field], pts, 1)
    phi = J @ proj
    dphi = (np.einsum("...ilk,...lj->...ijk", dJ, proj)
            + np.einsum("...il,...ljk->...ijk", J, dproj))
    return phi, dphi


def frame_at(model: ContactModel, p) -> ContactFrame:
    """Full contact-metric frame at ``p`` (single point or batch)."""
    pts = np.asarray(p, dtype=float)
    pg = point_geometry(model.metric, pts)
    d = model.dim
    n = model.n
    a, da_cov, d2a = eval_components(list(model.alpha), pts, 2)
    dalpha, ddalpha, reeb, dreeb = _reeb_and_derivative(a, da_cov, d2a, pts)

    g, g_inv, dg = pg.g, pg.g_inv, pg.dg
    gR = np.einsum("...ij,...j->...i", g, reeb)
    rho = np.sqrt(np.einsum("...i,...i->...", reeb, gR))
    drho = (2 * np.einsum("...i,...ik->...k", gR, dreeb)
            + np.einsum("...i,...ijk,...j->...k", reeb, dg, reeb)) / (2 * rho[..., None])
    n_unit = reeb / rho[..., None]
    dn = dreeb / rho[..., None, None] - np.einsum("...i,...k->...ik", reeb, drho) / rho[..., None, None] ** 2

    gn = np.einsum("...ij,...j->...i", g, n_unit)
    proj = np.eye(d) - np.einsum("...i,...j->...ij", n_unit, gn)
    dgn = np.einsum("...ijk,...j->...ik", dg, n_unit) + np.einsum("...ij,...jk->...ik", g, dn)
    dproj = -(np.einsum("...ik,...j->...ijk", dn, gn) + np.einsum("...i,...jk->...ijk", n_unit, dgn))

    # A = -g^{-1} d alpha, A^2 = -c^2 on xi
    A = -g_inv @ dalpha
    dginv = -np.einsum("...ia,...abk,...bj->...ijk", g_inv, dg, g_inv)
    dA = -(np.einsum("...ilk,...lj->...ijk", dginv, dalpha)
           + np.einsum("...il,...ljk->...ijk", g_inv, ddalpha))
    c2 = -np.einsum("...ij,...ji->...", A, A) / (2 * n)
    if np.any(c2 <= 0):
        bad = np.argwhere(np.atleast_1d(c2 <= 0))[0]
        raise NotCompatible(f"A^2 is not negative definite at {pts.reshape(-1, d)[bad[0] if bad.size else 0].tolist()}")
    c = np.sqrt(c2)
    dc = -np.einsum("...ij,...jik->...k", A, dA) / (2 * n * c[..., None])
    theta_prime = rho * c

    j_residual = None
    if model.j_field is None:
        phi = A / c[..., None, None]
        dphi = dA / c[..., None, None, None] - np.einsum("...ij,...k->...ijk", A, dc) / c[..., None, None, None] ** 2
    else:
        phi, dphi = _user_phi(model, pts, proj, dproj)
        # deviation from the structure determined by the metric and d alpha
        j_residual = np.max(np.abs(phi - A / c[..., None, None]), axis=(-1, -2))

    # h = 1/2 L_R phi
    lie = (np.einsum("...k,...ijk->...ij", reeb, dphi)
           - np.einsum("...kj,...ik->...ij", phi, dreeb)
           + np.einsum("...ik,...kj->...ij", phi, dreeb))
    h = 0.5 * lie

    # II(u, v) = -1/2 (<v, nabla_u n> + <u, nabla_v n>), as a bilinear form on TM
    nab_n = dn + np.einsum("...ikj,...j->...ik", pg.gamma, n_unit)  # [i, k] = (nabla_k n)^i
    low = np.einsum("...ai,...ik->...ak", g, nab_n)  # <e_a, nabla_k n>
    II = -0.5 * (low + np.swapaxes(low, -1, -2))
    II = np.einsum("...ai,...ab,...bj->...ij", proj, II, proj)

    return ContactFrame(pg, a, dalpha, reeb, rho, n_unit, c, theta_prime, phi, h, II, proj,
                        da_cov, ddalpha, dreeb, dn, dphi, dproj, j_residual)


def nijenhuis_at(frame: ContactFrame, v, w, tol: float = 1e-9):
    """Torsion [phi, phi](v, w) for v, w tangent to the contact planes."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    for name, x in (("v", v), ("w", w)):
        if np.any(np.abs(frame.alpha_of(x)) > tol * np.maximum(1.0, np.linalg.norm(x, axis=-1))):
            raise NotInXi(f"{name} is not tangent to the contact planes")
    return frame.torsion(v, w)


@dataclass(frozen=True)
class Compatible:
    theta_prime: float
    spread: float

    verdict = "Compatible"


@dataclass(frozen=True)
class WeaklyCompatible:
    c: np.ndarray
    failed: str
    residual: float
    point: tuple[float, ...]

    verdict = "WeaklyCompatible"


@dataclass(frozen=True)
class Incompatible:
    failed: str
    residual: float
    point: tuple[float, ...]

    verdict = "Incompatible"


def compatibility_classify(model: ContactModel, n_points: int = 64, seed: int = 0,
                           tol: float = 1e-6, points=None):
    """Strongest of Compatible / WeaklyCompatible / Incompatible that holds.

    Non-compatible verdicts name the first failing test in the order
    ``reeb-orthogonal``, ``a-square`` (weak notion), then ``reeb-unit`` and
    ``theta-constant``.
    """
    if points is None:
        rng = np.random.default_rng(seed)
        points = model.sample(n_points, rng)
    pts = np.asarray(points, dtype=float).reshape(-1, model.dim)
    fr = frame_at(model, pts)
    g = fr.geometry.g
    d = model.dim

    gR = fr.geometry.lower(fr.reeb)
    orth = np.linalg.norm(gR - fr.rho[:, None] ** 2 * fr.alpha, axis=-1) / np.linalg.norm(gR, axis=-1)
    A = -fr.geometry.g_inv @ fr.dalpha
    xi_proj = np.eye(d) - np.einsum("...i,...j->...ij", fr.reeb, fr.alpha)
    target = -fr.c[:, None, None] ** 2 * xi_proj
    sq = np.max(np.abs(A @ A - target), axis=(-1, -2)) / np.max(np.abs(target), axis=(-1, -2))
    unit = np.abs(fr.rho - 1.0)

    def worst(res):
        k = int(np.argmax(res))
        return float(res[k]), tuple(float(x) for x in pts[k])

    for name, res in (("reeb-orthogonal", orth), ("a-square", sq)):
        if np.max(res) > tol:
            r, p = worst(res)
            return Incompatible(name, r, p)
    tp = fr.theta_prime
    spread = float((np.max(tp) - np.min(tp)) / np.mean(tp))
    if np.max(unit) > tol:
        r, p = worst(unit)
        return WeaklyCompatible(fr.c, "reeb-unit", r, p)
    if spread > tol:
        return WeaklyCompatible(fr.c, "theta-constant", spread, tuple(float(x) for x in pts[int(np.argmax(tp))]))
    return Compatible(float(np.mean(tp)), spread)


def is_CR(model: ContactModel, n_points: int = 32, seed: int = 0, pairs: int = 8,
          tol: float = 1e-7) -> tuple[bool, float]:
    """Sampled integrability test: the xi-part of [phi, phi](v, w) vanishes."""
    rng = np.random.default_rng(seed)
    pts = model.sample(n_points, rng)
    fr = frame_at(model, pts)
    worst = 0.0
    for _ in range(pairs):
        v = fr.random_xi(rng)
        w = fr.random_xi(rng)
        v = v / fr.geometry.norm(v)[:, None]
        w = w / fr.geometry.norm(w)[:, None]
        t = fr.xi_part(nijenhuis_at(fr, v, w))
        worst = max(worst, float(np.max(fr.geometry.norm(t))))
    return worst <= tol, worst
