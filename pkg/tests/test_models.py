import json
import math

import numpy as np
import pytest

from contact_radius.contact import compatibility_classify, frame_at, is_CR
from contact_radius.errors import InvalidInputs, ManifestError, NotCompatible, UnknownModel
from contact_radius.geometry import point_geometry
from contact_radius.identities import run_identity_suite
from contact_radius.models import (CONTROLS, get_model, list_models, load_manifest, model_bound_inputs,
                                   model_from_manifest)

HEIS3_MANIFEST = {
    "dim": 3, "coords": ["x", "y", "z"], "n": 1,
    "alpha": ["-y/2", "0", "1/2"],
    "metric": [["1/4 + y^2/4", "0", "-y/4"], ["1/4", "0"], ["1/4"]],
    "inj": 10, "conv": "unknown",
    "domain": [[-5, 5], [-5, 5], [-5, 5]],
    "orbits": [{"point": [0, 0, 0], "period": "unknown"}],
}


def _write(tmp_path, data, name="m.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


def test_registry_contents():
    assert sorted(list_models()) == ["heisenberg3", "heisenberg5", "round-s3"]


@pytest.mark.parametrize("name", ["heisenberg3", "heisenberg5", "round-s3"])
def test_registered_models_are_compatible_with_theta_two(name):
    spec = get_model(name)
    assert spec.expected.theta_prime == 2
    v = compatibility_classify(spec.model, n_points=50, seed=1)
    assert v.verdict == "Compatible"
    assert abs(v.theta_prime - 2) < 1e-8


@pytest.mark.parametrize("name", ["heisenberg3", "heisenberg5", "round-s3"])
def test_registered_models_pass_identity_suite(name):
    assert all(r.passed for r in run_identity_suite(get_model(name).model, points=30, seed=2, tol=1e-6))


def test_unknown_model():
    with pytest.raises(UnknownModel):
        get_model("x")


def test_metadata():
    r = get_model("round-s3")
    assert r.expected.inj == math.pi and r.expected.conv == math.pi / 2
    assert r.expected.reeb_orbit_seeds[0].period == 2 * math.pi
    h = get_model("heisenberg3")
    assert "open-manifold" in h.model.flags and "chart-truncated" in h.model.flags
    assert h.expected.inj == 10 and h.model.orbits == ()
    assert get_model("heisenberg5").expected.is_CR


def test_get_model_is_cached():
    assert get_model("heisenberg3") is get_model("heisenberg3")


def test_round_sphere_chart_covers_unit_radius():
    m = get_model("round-s3").model
    rng = np.random.default_rng(0)
    v = rng.standard_normal((500, 3))
    # geodesic distance d from the origin sits at coordinate radius tan(d/2)
    pts = v / np.linalg.norm(v, axis=1, keepdims=True) * math.tan(0.5)
    assert m.chart.contains(pts).all()


# ---- bound inputs ---------------------------------------------------------------------------

def test_bound_inputs_from_metadata():
    r = model_bound_inputs(get_model("round-s3").model)
    assert (r.n, r.inj, r.kappa, r.K_upper, r.sec_abs, r.theta_prime, r.ric_min) == (1, math.pi, 1, 1, 1, 2, 2)
    h = model_bound_inputs(get_model("heisenberg3").model)
    assert (h.n, h.inj, h.kappa, h.K_upper, h.sec_abs, h.theta_prime, h.ric_min) == (1, 10, -3, 1, 3, 2, 2)


def test_bound_inputs_estimated_for_unregistered_models():
    inp = model_bound_inputs(CONTROLS["heisenberg3-xi-scaled"][0]())
    # xi scaled by s = 1.21: theta' = 2/s, sec on xi = -3/s^2, sec of planes with R = 1/s^2
    assert inp.theta_prime == pytest.approx(2 / 1.21, rel=1e-8)
    assert inp.K_upper == pytest.approx(1 / 1.21 ** 2, rel=0.2)
    assert inp.kappa <= -2.0 and inp.kappa >= -3 / 1.21 ** 2 - 1e-9
    assert inp.ric_min == pytest.approx(2 / 1.21 ** 2, rel=1e-8)


def test_bound_inputs_need_compatibility_and_inj():
    with pytest.raises(NotCompatible):
        model_bound_inputs(CONTROLS["heisenberg3-conformal"][0]())
    m = model_from_manifest(dict(HEIS3_MANIFEST, inj="unknown"))
    with pytest.raises(InvalidInputs):
        model_bound_inputs(m)
    assert model_bound_inputs(m, inj=4.0).inj == 4.0


# ---- controls --------------------------------------------------------------------------------

def test_conformal_control_fails_classification():
    v = compatibility_classify(CONTROLS["heisenberg3-conformal"][0](), n_points=50)
    assert v.verdict != "Compatible"


def test_rotated_J_control_is_not_CR():
    m = CONTROLS["heisenberg5-rotated-J"][0]()
    ok, defect = is_CR(m, n_points=20)
    assert not ok and defect > 1e-3
    ok, defect = is_CR(get_model("heisenberg5").model, n_points=20)
    assert ok and defect < 1e-10


def test_xi_scaled_control_metric():
    m = CONTROLS["heisenberg3-xi-scaled"][0]()
    g = point_geometry(m.metric, np.zeros(3), curvature=False).g
    np.testing.assert_allclose(g, np.diag([1.21 / 4, 1.21 / 4, 0]) + np.outer([0, 0, .5], [0, 0, .5]))


# ---- manifests ------------------------------------------------------------------------------

def test_manifest_reproduces_builtin(tmp_path):
    loaded = load_manifest(_write(tmp_path, HEIS3_MANIFEST))
    m = loaded.model
    assert m.name == "m"
    assert len(loaded.sha256) == 64
    pts = np.random.default_rng(3).uniform(-1, 1, (10, 3))
    a = frame_at(m, pts)
    b = frame_at(get_model("heisenberg3").model, pts)
    np.testing.assert_allclose(a.geometry.g, b.geometry.g, atol=1e-15)
    np.testing.assert_allclose(a.phi, b.phi, atol=1e-12)
    assert m.inj == 10 and m.conv is None and m.orbits[0].period is None


def test_manifest_full_metric_rows(tmp_path):
    full = dict(HEIS3_MANIFEST, metric=[["1/4 + y^2/4", "0", "-y/4"], ["0", "1/4", "0"], ["-y/4", "0", "1/4"]])
    m = load_manifest(_write(tmp_path, full)).model
    g = point_geometry(m.metric, np.array([0.0, 1.0, 0.0]), curvature=False).g
    np.testing.assert_allclose(g, [[0.5, 0, -0.25], [0, 0.25, 0], [-0.25, 0, 0.25]])


def test_manifest_hash_is_content_digest(tmp_path):
    a = load_manifest(_write(tmp_path, HEIS3_MANIFEST, "a.json"))
    b = load_manifest(_write(tmp_path, HEIS3_MANIFEST, "b.json"))
    c = load_manifest(_write(tmp_path, dict(HEIS3_MANIFEST, inj=9), "c.json"))
    assert a.sha256 == b.sha256 != c.sha256


@pytest.mark.parametrize("patch, path", [
    ({"metric": [["1", "0", "x"], ["0", "1", "0"], ["0", "0", "1"]]}, "$.metric[2][0]"),
    ({"alpha": ["-y/2", "0"]}, "$.alpha"),
    ({"alpha": ["-y/2", "0", "1/ + 2"]}, "$.alpha[2]"),
    ({"alpha": ["-y/2", "0", "w"]}, "$.alpha[2]"),
    ({"metric": [["1", "0", "0"], ["1", "0"], ["1", "2"]]}, "$.metric[2]"),
    ({"coords": ["x", "x", "z"]}, "$.coords"),
    ({"dim": 4}, "$.coords"),
    ({"n": 2}, "$.n"),
    ({"inj": -1}, "$.inj"),
    ({"orbits": [{"point": [0, 0]}]}, "$.orbits[0].point"),
    ({"domain": [[-1, 1], [1, -1], [-1, 1]]}, "$.domain[1]"),
    ({"J": [["0"]]}, "$.J"),
])
def test_manifest_errors_name_the_field(tmp_path, patch, path):
    with pytest.raises(ManifestError) as info:
        load_manifest(_write(tmp_path, dict(HEIS3_MANIFEST, **patch)))
    assert info.value.path == path


def test_manifest_missing_field(tmp_path):
    data = dict(HEIS3_MANIFEST)
    del data["metric"]
    with pytest.raises(ManifestError) as info:
        load_manifest(_write(tmp_path, data))
    assert info.value.path == "$.metric"


def test_manifest_invalid_json_and_indefinite_metric(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ManifestError):
        load_manifest(p)
    with pytest.raises(ManifestError) as info:
        load_manifest(_write(tmp_path, dict(HEIS3_MANIFEST, metric=[["-1", "0", "0"], ["1", "0"], ["1"]])))
    assert info.value.path == "$.metric"
    with pytest.raises(ManifestError):
        load_manifest(tmp_path / "missing.json")
