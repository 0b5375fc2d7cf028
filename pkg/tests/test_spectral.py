import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from natquant.charts import get_chart
from natquant.errors import GuardViolation, NotNormalized
from natquant.geometry import Constants
from natquant.grids import GridSpec
from natquant.quantization import ScalarField, energy_functional
from natquant.spectral import anomaly_gap, discretize, eigenvalues

HALF = Constants(1.0, 0.5)  # hbar^2/2m = 1
CIRCLE = get_chart("circle-deformed:0")


def circle_levels(chart, variant, N, k=5):
    return eigenvalues(discretize(chart, HALF, variant, None, GridSpec((N,))), k).eigenvalues


def test_diagonal_matrix():
    assert_allclose(eigenvalues(np.diag([3.0, -1.0]), 2).eigenvalues, [-1.0, 3.0])


def test_k_out_of_range():
    with pytest.raises(ValueError):
        eigenvalues(np.eye(2), 3)


def test_flat_circle_fourier_levels():
    assert_allclose(circle_levels(CIRCLE, "SCH", 256), [0, 1, 1, 4, 4], atol=1e-3)


def test_dewitt_equals_schroedinger_in_arc_length():
    a = discretize(CIRCLE, HALF, "SCH", None, GridSpec((128,)))
    b = discretize(CIRCLE, HALF, "DW", None, GridSpec((128,)))
    assert np.array_equal(a.matrix, b.matrix)


def test_schroedinger_spectrum_is_chart_invariant():
    a = circle_levels(CIRCLE, "SCH", 256)
    b = circle_levels(get_chart("circle-deformed:0.2"), "SCH", 256)
    assert_allclose(a, b, atol=1e-4)


def test_second_order_convergence():
    errs = [abs(circle_levels(CIRCLE, "SCH", N, 7)[5] - 9.0) for N in (64, 128, 256)]
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 3.5) & (ratios < 4.5))


@pytest.mark.parametrize("boundary, expected", [("neumann", [0, 1, 4, 9]), ("dirichlet", [1, 4, 9, 16])])
def test_interval_boundary_closures(boundary, expected):
    line = get_chart("cartesian:1")
    grid = GridSpec((200,), bounds=((0.0, math.pi),), boundary=boundary)
    vals = eigenvalues(discretize(line, HALF, "SCH", None, grid), 4).eigenvalues
    assert_allclose(vals, expected, rtol=2e-3, atol=1e-9)


def test_external_potential_shifts_levels():
    vals = eigenvalues(discretize(CIRCLE, HALF, "SCH", ScalarField.constant(2.5), GridSpec((64,))), 3).eigenvalues
    assert_allclose(vals[0], 2.5, atol=1e-12)


@pytest.mark.parametrize(
    "chart_id, grid",
    [
        ("circle-deformed:0.3", GridSpec((64,))),
        ("sphere2:1", GridSpec((16, 24))),
        ("polar2", GridSpec((20, 16), bounds=((0.5, 2.0), None))),
        ("plane-deformed:0.2:sin-x", GridSpec((16, 16), bounds=((-1.0, 1.0), (-1.0, 1.0)), boundary="dirichlet")),
        ("plane-deformed:0.3:gaussian-bump:1", GridSpec((16, 16), bounds=((-1.0, 1.0), (-1.0, 1.0)))),
    ],
)
def test_symmetrised_matrix_is_symmetric(chart_id, grid):
    h = discretize(get_chart(chart_id), HALF, "DW", None, grid)
    assert h.asymmetry < 1e-10 * max(1.0, np.abs(h.matrix).max())
    assert np.array_equal(h.matrix, h.matrix.T)


def test_sphere_low_levels_coarse():
    vals = eigenvalues(discretize(get_chart("sphere2:1"), HALF, "SCH", None, GridSpec((32, 32))), 9).eigenvalues
    assert_allclose(vals, [0, 2, 2, 2, 6, 6, 6, 6, 6], rtol=0.03, atol=1e-9)


def test_polar_grid_touching_origin_is_refused():
    with pytest.raises(GuardViolation):
        discretize(get_chart("polar2"), HALF, "SCH", None, GridSpec((16, 16), bounds=((-1.0, 1.0), None)))


def test_eigenvectors_are_measure_normalised():
    chart = get_chart("circle-deformed:0.2")
    h = discretize(chart, HALF, "DW", None, GridSpec((64,)))
    vecs = eigenvalues(h, 3, vectors=True).eigenvectors
    gram = vecs.T @ (h.weights[:, None] * vecs)
    assert_allclose(gram, np.eye(3), atol=1e-12)


def test_variational_consistency():
    chart = get_chart("circle-deformed:0.2")
    grid = GridSpec((256,))
    h = discretize(chart, HALF, "DW", None, grid)
    sp = eigenvalues(h, 4, vectors=True)
    for i in (0, 1, 3):
        e = energy_functional(chart, HALF, None, sp.eigenvectors[:, i], grid, "DW")
        assert_allclose(e, sp.eigenvalues[i], rtol=1e-6, atol=1e-12)


def test_nodal_energy_requires_normalisation():
    with pytest.raises(NotNormalized):
        energy_functional(CIRCLE, HALF, None, np.ones(64), GridSpec((64,)), "DW")


def test_identical_charts_have_no_anomaly():
    rep = anomaly_gap(CIRCLE, CIRCLE, HALF, "DW", GridSpec((64,)), 5)
    assert np.all(rep.gaps == 0)


def test_dewitt_anomaly_grows_with_deformation():
    grid = GridSpec((128,))
    gaps = [anomaly_gap(CIRCLE, get_chart(f"circle-deformed:{e}"), HALF, "DW", grid, 5).gaps.max() for e in (0.05, 0.1, 0.2)]
    assert gaps[0] < gaps[1] < gaps[2]


def test_dirichlet_pole_guard_lifts_axisymmetric_modes():
    # zero-value closure at a guard band biases the m = 0 levels upward; the zero-flux grid does not
    sphere = get_chart("sphere2:1")
    h = 2 * math.pi / 32
    guarded = eigenvalues(discretize(sphere, HALF, "SCH", None, GridSpec((32, 32), guard=2 * h, boundary="dirichlet")), 1)
    open_ = eigenvalues(discretize(sphere, HALF, "SCH", None, GridSpec((32, 32))), 1)
    assert guarded.eigenvalues[0] > 0.3
    assert abs(open_.eigenvalues[0]) < 1e-10
