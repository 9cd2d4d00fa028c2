import math

import numpy as np
import pytest

from conftest import flat_model
from contact_radius import lab, ode
from contact_radius.bounds import BoundInputs, compute_constants, radius_bounds
from contact_radius.contact import OrbitSeed, frame_at, reeb_at
from contact_radius.errors import (LeftChartDomain, NotUnit, OrbitNotClosed, RadiusTooLarge, StepFailure)
from contact_radius.geometry import point_geometry
from contact_radius.models import get_model, model_bound_inputs

FLAT_INPUTS = BoundInputs(n=1, inj=10.0, kappa=0.0, K_upper=0.0, sec_abs=0.0, theta_prime=1.0, ric_min=0.0)
ORIGIN = np.zeros(3)


def _unit(model, p, v):
    v = np.asarray(v, dtype=float)
    return v / float(point_geometry(model.metric, np.asarray(p, dtype=float), curvature=False).norm(v))


# ---- integrator --------------------------------------------------------------------------

def test_integrator_on_oscillator():
    rhs = lambda _t, y: np.stack([y[:, 1], -y[:, 0]], axis=-1)
    t = np.linspace(0, 10, 21)
    sol = ode.integrate(rhs, [[1.0, 0.0], [0.0, 2.0]], 10.0, t)
    np.testing.assert_allclose(sol.y[:, 0, 0], np.cos(t), atol=1e-8)
    np.testing.assert_allclose(sol.y[:, 1, 0], 2 * np.sin(t), atol=2e-8)
    assert sol.accepted >= 50   # the step never exceeds length/50


def test_integrator_node_output():
    sol = ode.integrate(lambda _t, y: -y, [1.0], 1.0, None)
    assert sol.t[0] == 0.0 and sol.t[-1] == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_allclose(sol.y[:, 0, 0], np.exp(-sol.t), rtol=1e-9)


def test_integrator_rejects_unsorted_times():
    with pytest.raises(ValueError):
        ode.integrate(lambda _t, y: y, [1.0], 1.0, [0.5, 0.2])


def test_integrator_gives_up_on_blow_up():
    with pytest.raises(StepFailure), np.errstate(all="ignore"):
        ode.integrate(lambda _t, y: y ** 2, [1.0], 2.0, [2.0])


# ---- geodesics -------------------------------------------------------------------------

def test_flat_geodesic_is_straight(flat):
    p = np.array([0.3, -1.0, 0.5])
    v = np.array([0.6, 0.0, 0.8])
    path = lab.integrate_geodesic(flat, p, v, 3.0)
    expect = p + path.s[:, None] * v
    assert np.max(np.abs(path.points - expect)) < 1e-12
    assert np.max(np.abs(path.velocities - v)) < 1e-12
    back = lab.integrate_geodesic(flat, p, -v, 3.0, n_samples=7)
    fwd = lab.integrate_geodesic(flat, p, v, 3.0, n_samples=7)
    np.testing.assert_allclose(back.points - p, -(fwd.points - p), atol=1e-12)


def test_round_sphere_half_great_circle(round_s3):
    # (-1, 0, 0) and (1, 0, 0) are antipodal on the equator, a distance pi apart
    path = lab.integrate_geodesic(round_s3, [-1.0, 0.0, 0.0], [1.0, 0.0, 0.0], math.pi)
    np.testing.assert_allclose(path.points[-1], [1.0, 0.0, 0.0], atol=1e-7)
    assert path.speed_drift < 1e-8


def test_round_sphere_radial_geodesic(round_s3):
    # from the origin the coordinate radius grows like tan(s/2)
    v = _unit(round_s3, ORIGIN, [1.0, 2.0, -2.0])
    path = lab.integrate_geodesic(round_s3, ORIGIN, v, 2.0, n_samples=41)
    radius = np.linalg.norm(path.points, axis=1)
    np.testing.assert_allclose(radius, np.tan(path.s / 2), atol=1e-7)
    np.testing.assert_allclose(path.points / np.maximum(radius, 1e-300)[:, None] * (radius > 0)[:, None],
                               np.outer(radius > 0, [1 / 3, 2 / 3, -2 / 3]), atol=1e-9)


def test_reeb_flow_line_is_geodesic(heis3):
    p = np.array([0.4, -0.7, 0.2])
    R = reeb_at(heis3, p)
    path = lab.integrate_geodesic(heis3, p, R, 1.0)
    np.testing.assert_allclose(path.velocities, reeb_at(heis3, path.points), atol=1e-8)
    np.testing.assert_allclose(path.points, p + np.outer(path.s, R), atol=1e-8)


@pytest.mark.parametrize("name", ["round-s3", "heisenberg3", "heisenberg5"])
def test_unit_speed_conserved(name):
    model = get_model(name).model
    rng = np.random.default_rng(1)
    for p in model.sample(3, rng):
        p = 0.5 * p
        v = _unit(model, p, rng.standard_normal(model.dim))
        path = lab.integrate_geodesic(model, p, v, 1.0)
        assert path.speed_drift < 1e-8
        assert len(path.samples) == path.s.size


def test_geodesic_preconditions(round_s3):
    with pytest.raises(NotUnit):
        lab.integrate_geodesic(round_s3, ORIGIN, [1.0, 0.0, 0.0], 1.0)
    with pytest.raises(LeftChartDomain) as info:
        lab.integrate_geodesic(round_s3, ORIGIN, [0.5, 0.0, 0.0], 3.0)
    assert 2.0 < info.value.s < 2.3     # tan(s/2) = 2 at s = 2.214
    with pytest.raises(ValueError):
        lab.integrate_geodesic(round_s3, ORIGIN, [0.5, 0.0, 0.0], 0.0)


# ---- Jacobi fields -----------------------------------------------------------------------

def test_flat_jacobi_field_is_linear(flat):
    path = lab.integrate_geodesic(flat, ORIGIN, [0.0, 0.6, 0.8], 2.0, n_samples=11)
    w = np.array([1.0, 0.3, -0.2])
    sol = lab.jacobi_along(path, np.zeros(3), w)
    np.testing.assert_allclose(sol.J, np.outer(path.s, w), atol=1e-12)
    np.testing.assert_allclose(sol.Jp, np.tile(w, (11, 1)), atol=1e-12)


def test_round_sphere_jacobi_norm_is_sine(round_s3):
    p = np.array([0.1, -0.2, 0.05])
    pg = point_geometry(round_s3.metric, p, curvature=False)
    E = pg.orthonormal_frame()
    path = lab.integrate_geodesic(round_s3, p, E[:, 0], 1.0, n_samples=21)
    sol = lab.jacobi_along(path, np.zeros(3), E[:, 1])
    norms = point_geometry(round_s3.metric, path.points, curvature=False).norm(sol.J)
    np.testing.assert_allclose(norms, np.sin(path.s), atol=1e-7)


def test_hyperbolic_jacobi_norm_is_sinh(hyperbolic):
    p = np.array([0.0, 0.0, 1.0])
    path = lab.integrate_geodesic(hyperbolic, p, [0.6, 0.0, 0.8], 1.5, n_samples=16)
    sol = lab.jacobi_along(path, np.zeros(3), [0.0, 1.0, 0.0])
    norms = point_geometry(hyperbolic.metric, path.points, curvature=False).norm(sol.J)
    np.testing.assert_allclose(norms, np.sinh(path.s), atol=1e-6)


@pytest.mark.parametrize("name", ["round-s3", "heisenberg3"])
def test_gauss_lemma(name):
    model = get_model(name).model
    p = np.array([0.2, 0.1, -0.3])
    E = point_geometry(model.metric, p, curvature=False).orthonormal_frame()
    path = lab.integrate_geodesic(model, p, E[:, 2], 0.8, n_samples=17)
    sol = lab.jacobi_along(path, np.zeros(3), 0.7 * E[:, 0] - 1.3 * E[:, 1])
    inner = point_geometry(model.metric, path.points, curvature=False).inner(sol.J, path.velocities)
    assert np.max(np.abs(inner)) < 1e-8


@pytest.mark.parametrize("name", ["round-s3", "heisenberg3"])
def test_jacobi_equation_residual(name):
    model = get_model(name).model
    p = np.array([0.1, 0.3, 0.2])
    E = point_geometry(model.metric, p, curvature=False).orthonormal_frame()
    path = lab.integrate_geodesic(model, p, E[:, 0], 1.0, n_samples=11)
    sol = lab.jacobi_along(path, 0.3 * E[:, 1], E[:, 2])
    for s0 in (0.3, 0.5, 0.7):
        assert sol.residual(s0) < 1e-6


# ---- disks -------------------------------------------------------------------------------

def test_adapted_basis_is_orthonormal_and_J_adapted(heis5):
    p = np.array([0.2, -0.1, 0.4, 0.3, 0.5])
    Bm = lab.adapted_basis(heis5, p)
    fr = frame_at(heis5, p)
    G = Bm.T @ fr.geometry.g @ Bm
    np.testing.assert_allclose(G, np.eye(5), atol=1e-12)
    for i in range(2):
        np.testing.assert_allclose(fr.apply(fr.phi, Bm[:, 2 * i]), Bm[:, 2 * i + 1], atol=1e-12)
    np.testing.assert_allclose(Bm[:, -1], fr.n_unit, atol=1e-14)


def test_disk_directions():
    poly = lab.disk_directions(1, 8)
    np.testing.assert_allclose(np.linalg.norm(poly, axis=1), 1.0)
    assert poly[2] == pytest.approx([0.0, 1.0], abs=1e-15)
    rnd = lab.disk_directions(2, 5, seed=3)
    np.testing.assert_allclose(np.linalg.norm(rnd, axis=1), 1.0)
    np.testing.assert_array_equal(rnd, lab.disk_directions(2, 5, seed=3))


def test_disk_normal_at_center_is_reeb(heis3):
    disk = lab.disk_frame(heis3, [0.3, -0.4, 0.1], 0.3, (16, 8))
    np.testing.assert_allclose(disk.reeb_dot_normal[:, 0], 1.0, atol=1e-12)
    np.testing.assert_allclose(disk.normal[:, 0], np.tile(disk.basis[:, -1], (16, 1)), atol=1e-12)


def test_flat_disk_is_euclidean(flat):
    disk = lab.disk_frame(flat, ORIGIN, 1.0, (12, 5), inputs=FLAT_INPUTS)
    expect = disk.directions[:, None, :] * disk.s[None, :, None]
    np.testing.assert_allclose(disk.points, expect, atol=1e-12)
    np.testing.assert_allclose(np.abs(disk.normal), np.broadcast_to([0.0, 0.0, 1.0], disk.normal.shape),
                               atol=1e-12)
    assert np.all(disk.directions[:, 2] == 0.0)


def test_round_sphere_disk_is_well_conditioned(round_s3):
    disk = lab.disk_frame(round_s3, ORIGIN, 0.6, (32, 12))
    assert np.max(disk.gram_cond) < 10


def test_disk_radius_limits(round_s3):
    with pytest.raises(RadiusTooLarge):
        lab.disk_frame(round_s3, ORIGIN, 1.6, (4, 2))
    with pytest.raises(RadiusTooLarge):
        lab.disk_frame(round_s3, ORIGIN, 0.0, (4, 2))
    assert lab.max_disk_radius(FLAT_INPUTS, None) == 5.0
    assert lab.max_disk_radius(None, None) == math.inf


def test_batched_disks_match_single(heis3):
    centers = np.array([[0.0, 0.0, 0.0], [0.5, -0.2, 0.1]])
    both = lab.disk_frames(heis3, centers, 0.2, (8, 4))
    one = lab.disk_frame(heis3, centers[1], 0.2, (8, 4))
    np.testing.assert_allclose(both[1].points, one.points, atol=1e-9)
    np.testing.assert_allclose(both[1].reeb_dot_normal, one.reeb_dot_normal, atol=1e-9)


# ---- probes ------------------------------------------------------------------------------

def test_twisting_round_sphere(round_s3):
    rep = lab.twisting_probe(round_s3, ORIGIN, 0.5, (64, 32))
    assert rep.passed and rep.margin_min >= -1e-8
    assert rep.samples == 64 * 32


def test_twisting_heisenberg(heis3):
    assert lab.twisting_probe(heis3, ORIGIN, 0.3).passed


def test_twisting_without_decay_terms_fails(round_s3):
    rep = lab.twisting_probe(round_s3, ORIGIN, 0.5, (32, 16), A=0.0, B=0.0)
    assert not rep.passed and rep.margin_min < 0


@pytest.mark.xfail(strict=True, reason="on round-s3 the quadratic term alone keeps <R, n_D> above the bound")
def test_twisting_without_first_order_term_fails(round_s3):
    rep = lab.twisting_probe(round_s3, ORIGIN, 0.5, (32, 16), B=0.0)
    assert not rep.passed


def test_twisting_radius_limit(round_s3):
    with pytest.raises(RadiusTooLarge):
        lab.twisting_probe(round_s3, ORIGIN, 2.0)
    with pytest.raises(RadiusTooLarge):
        lab.twisting_probe(round_s3, ORIGIN, 0.7)   # beyond r_perp = 0.686


def test_jacobi_bounds_round_sphere(round_s3):
    rep = lab.jacobi_bound_probe(round_s3, ORIGIN, 0.5)
    assert rep.passed
    assert rep.margins["X_norm"] > 0


def test_jacobi_bounds_flat(flat):
    rep = lab.jacobi_bound_probe(flat, ORIGIN, 1.0, (8, 4), inputs=FLAT_INPUTS)
    assert rep.margins["X_norm"] == pytest.approx(math.sqrt(2) - 1, abs=1e-12)
    assert rep.margins["nabla_X_norm"] == pytest.approx(0.0, abs=1e-12)


def test_jacobi_bounds_heisenberg(heis3):
    assert lab.jacobi_bound_probe(heis3, ORIGIN, 0.3).passed


def test_hessian_flat_equality(flat):
    rep = lab.hessian_distance_probe(flat, ORIGIN, 1.0, (8, 4), inputs=FLAT_INPUTS)
    assert abs(rep.margin_min) < 1e-12
    assert abs(rep.margins["hessian_max"]) < 1e-12


def test_hessian_round_sphere_equality(round_s3):
    rep = lab.hessian_distance_probe(round_s3, ORIGIN, 0.5)
    assert abs(rep.margin_min) < 1e-7
    assert abs(rep.margins["hessian_max"]) < 1e-7


def test_hessian_heisenberg(heis3):
    rep = lab.hessian_distance_probe(heis3, ORIGIN, 0.3)
    assert rep.passed and rep.details["K"] == 1.0


def test_taming_at_center_is_exact(heis5):
    rep = lab.taming_probe(heis5, np.zeros(5), 0.01, (8, 4))
    assert rep.margins["F_diag_at_center"] == 0.0 or rep.margins["F_diag_at_center"] < 1e-14
    assert rep.margins["F_offdiag_at_center"] < 1e-14


def test_taming_round_sphere_at_r_tau(round_s3):
    r_tau = radius_bounds(model_bound_inputs(round_s3)).r_tau
    rep = lab.taming_probe(round_s3, ORIGIN, r_tau)
    assert rep.passed
    assert rep.margins["taming_ratio"] > 0
    assert rep.details["r_tau"] == r_tau


def test_taming_beyond_r_tau_still_reports(round_s3):
    rep = lab.taming_probe(round_s3, ORIGIN, 0.6)
    assert rep.margins["taming_ratio"] > 0     # taming survives far beyond the proven radius
    assert rep.radius == 0.6


def test_taming_heisenberg(heis3):
    assert lab.taming_probe(heis3, ORIGIN, 0.02).passed


def test_levi_probe(heis5):
    rep = lab.levi_probe(heis5, np.zeros(5), 0.3, (8, 4))
    assert rep.passed
    assert rep.margins["levi_residual"] < 1e-8


# ---- Reeb orbits and tubes ----------------------------------------------------------------

def test_hopf_orbit_closes(round_s3):
    orbit = lab.integrate_reeb_orbit(round_s3, round_s3.orbits[0])
    assert orbit.defect < 1e-7
    assert orbit.period == pytest.approx(2 * math.pi)


def test_tube_round_sphere(round_s3):
    rep = lab.reeb_tube_probe(round_s3, round_s3.orbits[0], 0.3, (16, 8))
    k = compute_constants(model_bound_inputs(round_s3))
    assert rep.passed
    assert rep.margins["closure_defect"] < 1e-7
    assert rep.margins["reeb_dot_normal_min"] >= 1 - k.B * 0.3 - 0.5 * k.A * 0.09 - 1e-6


def test_tube_without_orbit(heis3):
    with pytest.raises(OrbitNotClosed):
        lab.reeb_tube_probe(heis3, None, 0.3)
    with pytest.raises(OrbitNotClosed):
        lab.integrate_reeb_orbit(heis3, OrbitSeed((0.0, 0.0, 0.0), 10.0))
    with pytest.raises(OrbitNotClosed):
        lab.integrate_reeb_orbit(heis3, OrbitSeed((0.0, 0.0, 0.0), None))


def test_tube_wrong_period(round_s3):
    with pytest.raises(OrbitNotClosed):
        lab.integrate_reeb_orbit(round_s3, OrbitSeed((1.0, 0.0, 0.0), 5.0))


def test_tube_radius_limits(round_s3):
    with pytest.raises(RadiusTooLarge):
        lab.reeb_tube_probe(round_s3, round_s3.orbits[0], 0.7)
    with pytest.raises(RadiusTooLarge):
        lab.reeb_tube_probe(round_s3, round_s3.orbits[0], 1.6)


# ---- reports -----------------------------------------------------------------------------

def test_report_serialisation(heis3):
    rep = lab.twisting_probe(heis3, ORIGIN, 0.2, (4, 3))
    d = rep.to_dict()
    assert list(d)[:6] == ["probe_id", "radius", "samples", "margin_min", "worst", "pass"]
    assert d["pass"] == (d["margin_min"] >= -d["tolerance"])
    lines = rep.csv_text().splitlines()
    assert lines[0] == "dir_index,s,margin"
    assert len(lines) == 1 + 4 * 3
    worst = min(rows[2] for rows in rep.rows)
    assert worst == rep.margin_min


def test_probes_independent_of_thread_count(heis3, monkeypatch):
    monkeypatch.setenv("CONTACT_RADIUS_THREADS", "1")
    a = lab.twisting_probe(heis3, ORIGIN, 0.3, (300, 4)).rows
    monkeypatch.setenv("CONTACT_RADIUS_THREADS", "3")
    b = lab.twisting_probe(heis3, ORIGIN, 0.3, (300, 4)).rows
    assert a == b
