import math

import numpy as np
import pytest

from finsler_completion import (
    AdmissibilityError,
    CustomMetric,
    DataError,
    DomainError,
    GridDomain,
    ProjectiveChange,
    RandersMetric,
    ScalarField,
    apply_projective_change,
    build_graph,
    check_positive_homogeneous,
    direction_fan,
    eval_metric,
    load_metric,
    stencil_offsets,
)
from oracles import PHI, randers

EYE = [[1.0, 0.0], [0.0, 1.0]]


@pytest.fixture
def square():
    return GridDomain.box([-1, -1], [1, 1], 0.125)


def test_box_shape_and_coordinates(square):
    assert square.shape == (17, 17)
    assert square.n_nodes == 289
    np.testing.assert_allclose(square.point((8, 8)), [0, 0])
    assert square.nearest_node([0.01, -0.99]) == (8, 0)


def test_box_requires_integer_cells():
    with pytest.raises(ValueError):
        GridDomain.box([0], [1], 0.3)


def test_holes_are_masked_and_disconnected_mask_rejected(square):
    holed = square.with_holes([([0.5, 0.0], 0.2)])
    assert not holed.mask[holed.nearest_node([0.5, 0.0])]
    assert holed.n_nodes < square.n_nodes
    wall = square.mask.copy()
    wall[8, :] = False
    with pytest.raises(ValueError):
        GridDomain(square.origin, square.shape, square.h, wall)


def test_nearest_node_outside_raises(square):
    with pytest.raises(DomainError):
        square.nearest_node([2.0, 0.0])


def test_scalar_field_gradient_of_linear(square):
    f = ScalarField.from_function(square, lambda x: 0.3 * x[..., 0] - 2 * x[..., 1])
    grad = f.gradient()
    np.testing.assert_allclose(grad[square.mask], np.tile([0.3, -2.0], (square.n_nodes, 1)), atol=1e-12)


def test_scalar_field_rejects_nonfinite(square):
    vals = np.zeros(square.shape)
    vals[3, 3] = np.inf
    with pytest.raises(ValueError):
        ScalarField(square, vals)


def test_stencil_sizes():
    assert len(stencil_offsets(1)) == 2
    assert len(stencil_offsets(2, 4)) == 4
    assert len(stencil_offsets(2)) == 8
    assert len(stencil_offsets(2, 16)) == 16
    assert len(stencil_offsets(3, 6)) == 6
    assert len(stencil_offsets(3)) == 26
    with pytest.raises(ValueError):
        stencil_offsets(2, 26)


def test_direction_fan_is_unit():
    for n in (1, 2, 3):
        fan = direction_fan(n, offsets=stencil_offsets(n))
        np.testing.assert_allclose(np.linalg.norm(fan, axis=-1), 1.0)


def test_eval_metric_examples():
    euclid = RandersMetric(EYE, [0.0, 0.0])
    assert eval_metric(euclid, [0, 0], [1, 0]) == 1.0
    F = RandersMetric(EYE, [0.5, 0.0])
    assert eval_metric(F, [0, 0], [1, 0]) == pytest.approx(PHI, abs=1e-15)
    assert eval_metric(F, [0, 0], [0, 0]) == 0.0


def test_eval_metric_checks_domain(square):
    holed = square.with_holes([([0.5, 0.0], 0.2)])
    F = RandersMetric(EYE, [0.5, 0.0], holed)
    with pytest.raises(DomainError):
        eval_metric(F, [0.5, 0.0], [1, 0])
    with pytest.raises(DomainError):
        eval_metric(F, [3.0, 0.0], [1, 0])


def test_randers_matches_closed_form():
    rng = np.random.default_rng(3)
    g = [[2.0, 0.3], [0.3, 1.0]]
    w = [0.4, -0.7]
    F = RandersMetric(g, w)
    for v in rng.normal(size=(20, 2)):
        assert F(np.zeros(2), v) == pytest.approx(randers(g, w, list(v)), rel=1e-14)


def test_riemannian_case():
    F = RandersMetric(np.diag([4.0, 1.0]), [0.0, 0.0])
    assert F(np.zeros(2), np.array([1.0, 2.0])) == pytest.approx(math.sqrt(8.0))


def test_non_spd_g_is_rejected(square):
    with pytest.raises(DataError):
        RandersMetric([[1.0, 2.0], [2.0, 1.0]], [0.0, 0.0])
    bad = np.tile(np.eye(2), square.shape + (1, 1))
    bad[4, 5] = -np.eye(2)
    with pytest.raises(DataError, match="4, 5"):
        RandersMetric(bad, [0.0, 0.0], square)


def test_homogeneity_report_examples():
    pts = np.array([[0.0, 0.0], [0.3, -0.2]])
    rep = check_positive_homogeneous(RandersMetric(EYE, [0.0, 0.0]), pts, direction_fan(2))
    assert rep.max_relative_violation <= 1e-15
    assert rep.min_unit_value == pytest.approx(1.0)
    rep = check_positive_homogeneous(RandersMetric(EYE, [0.5, 0.0]), pts, direction_fan(2))
    assert rep.min_unit_value == pytest.approx(PHI - 1, abs=1e-12)
    assert rep.worst_direction == pytest.approx((-1.0, 0.0), abs=1e-12)
    assert rep.positive


def test_homogeneity_report_flags_negative_values():
    F = CustomMetric(lambda x, v: np.where(v[..., 0] < -0.9, -1.0, np.linalg.norm(v, axis=-1)), 2)
    rep = check_positive_homogeneous(F, np.zeros((1, 2)), direction_fan(2))
    assert not rep.positive
    assert rep.min_unit_value == -1.0


def test_projective_change_edge_contract():
    dom = GridDomain.box([-2, -2], [2, 2], 1.0)
    F = RandersMetric(EYE, [0.0, 0.0])
    f = ScalarField.from_function(dom, lambda x: 0.5 * x[..., 0])
    g = build_graph(dom, apply_projective_change(F, f), 4)
    assert g.weight((2, 2), (3, 2)) == pytest.approx(1.5)
    assert g.weight((2, 2), (1, 2)) == pytest.approx(0.5)
    zero = ScalarField.constant(dom, 0.0)
    np.testing.assert_array_equal(build_graph(dom, ProjectiveChange(F, zero)).weights, build_graph(dom, F).weights)


def test_projective_change_rejects_inadmissible():
    dom = GridDomain.box([-2, -2], [2, 2], 0.5)
    F = RandersMetric(EYE, [0.0, 0.0])
    f = ScalarField.from_function(dom, lambda x: 2 * x[..., 0])
    with pytest.raises(AdmissibilityError) as info:
        apply_projective_change(F, f)
    assert info.value.margin == pytest.approx(-1.0)
    assert info.value.worst_direction == pytest.approx((-1.0, 0.0), abs=1e-12)


def test_load_metric_families(square, tmp_path):
    F = load_metric({"g": "identity", "omega": [0.5, 0.0]}, square)
    assert F(np.zeros(2), np.array([1.0, 0.0])) == pytest.approx(PHI)
    M = load_metric({"g": {"diag": [1, 2]}, "omega": {"id": "modulated", "base": [0.4, 0.0],
                     "amplitude": 0.1, "wavelength": 2.0}}, square)
    assert M.omega(np.array([0.5, 0.0]))[0] == pytest.approx(0.44)
    A = load_metric({"omega": {"id": "axial", "base": 0.4, "amplitude": 0.1, "wavelength": 2.0}}, square)
    assert A.omega(np.array([0.5, 0.7])) == pytest.approx([0.5, 0.0])
    tab = np.zeros(square.shape + (2,))
    tab[..., 0] = 0.25
    tab.astype("<f8").tofile(tmp_path / "w.f8")
    T = load_metric({"g": "identity", "omega": {"file": "w.f8"}}, square, tmp_path)
    assert T.kind == "tabulated-randers"
    assert T(np.array([0.1, 0.1]), np.array([1.0, 0.0])) == pytest.approx(math.sqrt(1.0625) + 0.25)
