import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from contact_radius.contact import ContactModel
from contact_radius.geometry import Chart, MetricField
from contact_radius.models import get_model

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.differing_executors],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def round_s3():
    return get_model("round-s3").model


@pytest.fixture(scope="session")
def heis3():
    return get_model("heisenberg3").model


@pytest.fixture(scope="session")
def heis5():
    return get_model("heisenberg5").model


def flat_model(inj=10.0):
    """Euclidean R^3 carrying the form dz - y dx (not compatible, only for geodesics)."""
    chart = Chart(("x", "y", "z"), ((-5.0, 5.0),) * 3)
    metric = MetricField.from_strings(chart, [["1", "0", "0"], ["1", "0"], ["1"]])
    alpha = tuple(chart.parse(t) for t in ("-y", "0", "1"))
    return ContactModel("flat", chart, alpha, metric, inj=inj)


def hyperbolic_model():
    """Upper half-space (dx^2 + dy^2 + dz^2)/z^2, sectional curvature -1."""
    chart = Chart(("x", "y", "z"), ((-5.0, 5.0), (-5.0, 5.0), (0.05, 20.0)))
    g = "1/z^2"
    metric = MetricField.from_strings(chart, [[g, "0", "0"], [g, "0"], [g]])
    alpha = tuple(chart.parse(t) for t in ("-y", "0", "1"))
    return ContactModel("hyperbolic", chart, alpha, metric, inj=10.0)


@pytest.fixture(scope="session")
def flat():
    return flat_model()


@pytest.fixture(scope="session")
def hyperbolic():
    return hyperbolic_model()


def unit_speed_heisenberg():
    """alpha = dz - y dx with g = dx^2 + dy^2 + alpha^2: compatible with rotation speed 1."""
    chart = Chart(("x", "y", "z"), ((-5.0, 5.0),) * 3)
    metric = MetricField.from_strings(chart, [["1 + y^2", "0", "-y"], ["1", "0"], ["1"]])
    alpha = tuple(chart.parse(t) for t in ("-y", "0", "1"))
    return ContactModel("heisenberg3-unit", chart, alpha, metric, inj=10.0,
                        sample_box=((-2.0, 2.0),) * 3)


def twisted_flat_model():
    """alpha = cos z dx + sin z dy on flat R^3: compatible, rotation speed 1, h != 0."""
    chart = Chart(("x", "y", "z"), ((-5.0, 5.0),) * 3)
    metric = MetricField.from_strings(chart, [["1", "0", "0"], ["1", "0"], ["1"]])
    alpha = tuple(chart.parse(t) for t in ("cos(z)", "sin(z)", "0"))
    return ContactModel("twisted-flat", chart, alpha, metric, inj=10.0, sample_box=((-2.0, 2.0),) * 3)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
