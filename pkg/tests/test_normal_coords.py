import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from natquant.charts import get_chart
from natquant.errors import LeftDomain, StepTooLarge
from natquant.geometry import Constants, metric_jet
from natquant.normal_coords import (
    build_normal_chart,
    integrate_geodesic,
    metric_expansion_fit,
    orthonormal_frame,
    qmp_normal_asymptote,
    shoot,
)

UNIT = Constants()
SPHERE = get_chart("sphere2:1")


def test_equator_geodesic_is_great_circle():
    geo = integrate_geodesic(SPHERE, [math.pi / 2, 0.0], [0.0, 1.0], 1.0, 0.01)
    assert_allclose(geo.points[-1], [math.pi / 2, 1.0], atol=1e-12)
    assert_allclose(geo.s[-1], 1.0)


def test_polar_radial_geodesic():
    geo = integrate_geodesic(get_chart("polar2"), [1.0, 0.3], [1.0, 0.0], 0.5, 0.01)
    assert_allclose(geo.points[-1], [1.5, 0.3], atol=1e-13)


def test_polar_straight_line():
    # chord of the unit circle: from (1, 0) heading +y in Cartesian terms
    geo = integrate_geodesic(get_chart("polar2"), [1.0, 0.0], [0.0, 1.0], 1.0, 0.005)
    r, phi = geo.points[-1]
    assert_allclose([r * math.cos(phi), r * math.sin(phi)], [1.0, 1.0], atol=1e-9)


def test_geodesic_errors():
    with pytest.raises(LeftDomain):
        integrate_geodesic(get_chart("polar2"), [0.5, 0.0], [-1.0, 0.0], 1.0, 0.01)
    with pytest.raises(StepTooLarge):
        integrate_geodesic(SPHERE, [math.pi / 2, 0.0], [0.3, 1.0], 3.0, 1.5)


def test_shoot_equator_distance():
    res = shoot(SPHERE, [[math.pi / 2, 0.0]], [[math.pi / 2, 0.7]])
    assert_allclose(res.distance, [0.7], rtol=1e-12)


def test_shoot_batch_is_symmetric(rng):
    A = np.column_stack([rng.uniform(0.6, 2.5, 6), rng.uniform(0, 6.28, 6)])
    B = A + rng.uniform(-0.4, 0.4, A.shape)
    d1 = shoot(SPHERE, A, B).distance
    d2 = shoot(SPHERE, B, A).distance
    # RK4 over 64 steps limits the distance to ~1e-10
    assert_allclose(d1, d2, rtol=1e-9)
    # spherical law of cosines
    c = np.cos(A[:, 0]) * np.cos(B[:, 0]) + np.sin(A[:, 0]) * np.sin(B[:, 0]) * np.cos(A[:, 1] - B[:, 1])
    assert_allclose(d1, np.arccos(c), rtol=1e-9)


def test_orthonormal_frame(rng):
    M = rng.normal(size=(3, 3))
    g = M @ M.T + 3 * np.eye(3)
    E = orthonormal_frame(g)
    assert_allclose(E.T @ g @ E, np.eye(3), atol=1e-13)


def test_normal_chart_round_trip_and_origin_metric():
    nc = build_normal_chart(SPHERE, [1.1, 0.4], 0.2, 400)
    y = np.array([[0.05, -0.08], [0.1, 0.1]])
    assert_allclose(nc.inverse(nc.forward(y)), y, atol=1e-12)
    assert_allclose(nc.pullback_metric([0.0, 0.0]), np.eye(2), atol=1e-14)


def test_normal_chart_sphere_closed_form():
    # geodesic polar form: ds^2 = dr^2 + sin^2 r dphi^2
    nc = build_normal_chart(SPHERE, [1.0, 0.0], 0.4, 1000)
    y = np.array([0.3, 0.0])
    r = 0.3
    g = nc.pullback_metric(y)
    assert_allclose(g, np.diag([1.0, (math.sin(r) / r) ** 2]), atol=1e-12)


def test_normal_chart_must_fit():
    with pytest.raises(LeftDomain):
        build_normal_chart(SPHERE, [0.1, 0.0], 0.5)


def test_expansion_fit_on_sphere():
    nc = build_normal_chart(SPHERE, [1.0, 0.3], 0.1, 1000)
    fit = metric_expansion_fit(nc, 0.05)
    assert fit.relative_error < 0.01


def test_expansion_fit_flat_is_zero():
    nc = build_normal_chart(get_chart("polar2"), [1.0, 0.0], 0.1, 200)
    fit = metric_expansion_fit(nc, 0.05)
    assert fit.max_error < 1e-8


def test_normal_asymptote_sphere_positive():
    a = qmp_normal_asymptote(SPHERE, UNIT, [1.2, 0.3])
    assert a.relative_error < 0.01
    assert a.sign == 1


def test_normal_asymptote_flat():
    a = qmp_normal_asymptote(get_chart("polar2"), UNIT, [1.0, 0.0])
    assert abs(a.value) < 1e-6
    assert a.sign == 0


def test_metric_is_euclidean_at_origin_for_deformed_chart():
    chart = get_chart("plane-deformed:0.1:sin-x")
    nc = build_normal_chart(chart, [0.4, 0.2], 0.1, 200)
    assert_allclose(metric_jet(nc.chart, [1e-3, 0.0]).value, np.eye(2), atol=1e-8)
