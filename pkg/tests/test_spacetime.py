import math

import numpy as np
import pytest

from finsler_completion import (
    DataError,
    GridDomain,
    RandersMetric,
    ScalarField,
    StationaryMetric,
    assemble_lorentz,
    build_graph,
    fermat_projection_check,
    integrate_null_geodesic,
    randers_from_stationary,
    shift_slice,
    slice_change_roundtrip,
    spacelike_slice_check,
)
from finsler_completion.spacetime import lorentz_signature, null_time_rate
from oracles import PHI, null_tdot, randers

EYE = np.eye(2)


@pytest.fixture
def dom():
    return GridDomain.box([-2, -2], [2, 2], 0.0625)


def test_assemble_lorentz_examples():
    np.testing.assert_array_equal(assemble_lorentz(StationaryMetric(EYE, [0.0, 0.0]), [0, 0]), np.diag([-1, 1, 1]))
    S = StationaryMetric(EYE, [0.5, 0.0])
    expected = [[-1, 0.5, 0], [0.5, 1, 0], [0, 0, 1]]
    np.testing.assert_array_equal(assemble_lorentz(S, [0.3, 0.1]), expected)
    neg, pos = lorentz_signature(S, np.zeros((1, 2)))
    assert (neg[0], pos[0]) == (1, 2)


def test_randers_from_stationary_examples():
    F = randers_from_stationary(StationaryMetric(EYE, [0.0, 0.0]))
    assert F(np.zeros(2), np.array([3.0, 4.0])) == pytest.approx(5.0)
    F = randers_from_stationary(StationaryMetric(EYE, [0.5, 0.0]))
    a, w = F.coefficients(np.zeros(2))
    np.testing.assert_allclose(a, np.diag([1.25, 1.0]))
    F = randers_from_stationary(StationaryMetric(np.diag([4.0, 1.0]), [0.0, 0.0]))
    assert F(np.zeros(2), np.array([1.0, 1.0])) == pytest.approx(math.sqrt(5.0))


def test_non_spd_g_is_rejected(dom):
    with pytest.raises(DataError):
        StationaryMetric(np.diag([1.0, -1.0]), [0.0, 0.0])


def test_shift_slice_examples(dom):
    S = StationaryMetric(EYE, [0.0, 0.0], dom)
    const = shift_slice(S, ScalarField.constant(dom, 2.0))
    np.testing.assert_allclose(const.omega_at(np.array([0.3, 0.2])), [0.0, 0.0], atol=1e-15)
    lin = shift_slice(S, ScalarField.from_function(dom, lambda x: 0.3 * x[..., 0]))
    np.testing.assert_allclose(lin.omega_at(np.array([0.3, 0.2])), [0.3, 0.0], atol=1e-14)
    # the quadratic part g + w w^T is unchanged
    np.testing.assert_allclose(lin.quadratic_part(np.zeros(2)), EYE)
    np.testing.assert_allclose(lin.g_at(np.zeros(2)), EYE - np.diag([0.09, 0.0]), atol=1e-14)


def test_shift_round_trip(dom):
    S = StationaryMetric(EYE, [0.4, -0.1], dom)
    f = ScalarField.from_function(dom, lambda x: 0.2 * np.sin(x[..., 0]) * np.cos(x[..., 1]))
    back = shift_slice(shift_slice(S, f), -f)
    x = dom.coordinates()[5:60, 5:60].reshape(-1, 2)
    np.testing.assert_allclose(back.omega_at(x), S.omega_at(x), atol=1e-15)


def test_spacelike_examples(dom):
    S = StationaryMetric(EYE, [0.0, 0.0], dom)
    ok, margin = spacelike_slice_check(S, ScalarField.constant(dom, 0.0))
    assert ok and margin == pytest.approx(1.0)
    ok, margin = spacelike_slice_check(S, ScalarField.from_function(dom, lambda x: 0.5 * x[..., 0]))
    assert ok and margin == pytest.approx(0.5)
    ok, margin = spacelike_slice_check(S, ScalarField.from_function(dom, lambda x: 2 * x[..., 0]))
    assert not ok and margin == pytest.approx(-1.0)


def test_slice_change_roundtrip_examples(dom):
    S = StationaryMetric(EYE, [0.0, 0.0], dom)
    zero = slice_change_roundtrip(S, ScalarField.constant(dom, 0.0))
    assert zero["max_weight_difference"] == 0.0
    f = ScalarField.from_function(dom, lambda x: 0.3 * x[..., 0])
    assert slice_change_roundtrip(S, f)["max_weight_difference"] <= 1e-15
    shifted = randers_from_stationary(shift_slice(S, f))
    g = build_graph(dom, shifted)
    h = dom.h
    # the shifted Randers metric carries the full df; on the original g it equals |v| + 0.3 v1
    assert g.weight((10, 10), (11, 10)) == pytest.approx(1.3 * h, abs=1e-15)


@pytest.mark.parametrize("scheme", ["edge-difference", "central-difference"])
def test_roundtrip_both_schemes(dom, scheme):
    S = StationaryMetric(EYE, [0.3, 0.1], dom, gradient_scheme=scheme)
    f = ScalarField.from_function(dom, lambda x: 0.2 * np.sin(x[..., 0] + 0.5 * x[..., 1]))
    assert slice_change_roundtrip(S, f)["max_weight_difference"] <= 1e-12


def test_null_rate_examples():
    S = StationaryMetric(EYE, [0.5, 0.0])
    assert null_time_rate(S, np.zeros(2), np.array([1.0, 0.0])) == pytest.approx(PHI, abs=1e-15)
    assert null_time_rate(S, np.zeros(2), np.array([-1.0, 0.0])) == pytest.approx(PHI - 1, abs=1e-15)
    g = [[1.3, 0.2], [0.2, 0.8]]
    w = [0.2, -0.6]
    S = StationaryMetric(np.array(g), w)
    v = [0.4, 0.9]
    assert null_time_rate(S, np.zeros(2), np.array(v)) == pytest.approx(null_tdot(g, w, v), rel=1e-14)
    assert null_tdot(g, w, v) == pytest.approx(randers(g, w, v), rel=1e-14)


def test_minkowski_geodesic_is_straight(dom):
    S = StationaryMetric(EYE, [0.0, 0.0], dom)
    geo = integrate_null_geodesic(S, [0.0, 0.0], [0.75, 0.75], 100, 0.01)
    np.testing.assert_allclose(geo.t, geo.tau * math.sqrt(2) * 0.75, atol=1e-14)
    np.testing.assert_allclose(geo.x[-1], [0.75, 0.75], atol=1e-14)
    assert geo.null_defect.max() <= 1e-15
    rep = fermat_projection_check(S, geo)
    assert rep["max_rate_gap"] <= 1e-14
    assert abs(rep["relative_gap"]) <= 1e-14


def test_geodesic_exit_is_flagged(dom):
    S = StationaryMetric(EYE, [0.0, 0.0], dom)
    geo = integrate_null_geodesic(S, [1.5, 0.0], [1.0, 0.0], 100, 0.01)
    assert geo.exited
    assert np.all(geo.x[:, 0] <= 2.0)


def test_null_defect_converges_at_fourth_order():
    dom = GridDomain.box([-2, -2], [2, 2], 0.0625)
    omega = lambda x: np.stack([0.3 + 0.2 * np.sin(x[..., 0]), 0.2 * np.cos(x[..., 1])], axis=-1)  # noqa: E731
    S = StationaryMetric(EYE, omega, dom, dimension=2)
    defects = []
    for n in (4, 8, 16):
        geo = integrate_null_geodesic(S, [-1.0, -0.5], [1.0, 0.5], n, 1.0 / n, fd_step=1e-5)
        defects.append(geo.null_defect[-1])
    assert defects[0] / defects[1] > 12
    assert defects[1] / defects[2] > 12
    rep = fermat_projection_check(S, geo)
    assert rep["max_rate_gap"] <= 1e-6


def test_fermat_gap_constant_randers():
    dom = GridDomain.box([-2, -2], [2, 2], 1 / 64)
    S = StationaryMetric(EYE, [0.5, 0.0], dom)
    geo = integrate_null_geodesic(S, [-1.0, 0.0], [1.0, 0.0], 256, (4 / 3) / 256)
    assert geo.tdot[0] == pytest.approx(PHI, abs=1e-12)
    rep = fermat_projection_check(S, geo)
    assert rep["f_length"] == pytest.approx(PHI * 4 / 3, rel=1e-12)
    assert abs(rep["relative_gap"]) <= 0.02


def test_central_scheme_metric_is_randers(dom):
    S = StationaryMetric(EYE, [0.2, 0.0], dom, gradient_scheme="central-difference")
    shifted = randers_from_stationary(shift_slice(S, ScalarField.from_function(dom, lambda x: 0.1 * x[..., 1])))
    assert isinstance(shifted, RandersMetric)
    x = np.array([0.1, 0.2])
    v = np.array([0.0, 1.0])
    assert shifted(x, v) == pytest.approx(math.sqrt(1.0) + 0.1, abs=1e-12)
