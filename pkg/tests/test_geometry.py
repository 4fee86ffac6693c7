import numpy as np
import pytest
from hypothesis import given, strategies as st

from kgscatter.errors import ConvexHullViolation, InvalidObstacle, LineIntersectsObstacle, RadiusTooSmall
from kgscatter.geometry import (
    Ball,
    LineQuery,
    Obstacle,
    Torus,
    classify_line,
    closure_curve,
    curve_linking,
    gamma_curve,
    lambda_rec_check,
    orthonormal_basis,
    rotate_towards,
    unit,
)

TORUS = Torus((0.0, 0.0, 0.0), (0.0, 0.0, 1.0), 2.0, 0.5)
OBS = Obstacle((TORUS,))

angles = st.floats(0.0, 2 * np.pi, allow_nan=False)


def test_orthonormal_basis_is_right_handed():
    for v in ([0, 0, 1], [1, 2, 3], [-1, 0, 1e-3]):
        e1, e2 = orthonormal_basis(v)
        M = np.array([e1, e2, unit(v)])
        assert np.allclose(M @ M.T, np.eye(3), atol=1e-14)
        assert np.isclose(np.linalg.det(M), 1.0)


@given(angles)
def test_rotate_towards_keeps_unit_length(t):
    v = unit([1.0, 0.3, -0.2])
    w = orthonormal_basis(v)[0]
    r = rotate_towards(v, w, t)
    assert abs(np.linalg.norm(r) - 1.0) < 1e-12
    assert abs(np.dot(r, v) - np.cos(t)) < 1e-12


def test_overlapping_components_rejected():
    with pytest.raises(InvalidObstacle):
        Obstacle((Ball((0, 0, 0), 1.0), Ball((1.5, 0, 0), 1.0)))
    with pytest.raises(InvalidObstacle):
        Torus((0, 0, 0), (0, 0, 1), 1.0, 1.5)


def test_line_through_hole_links_once():
    # vertical line through the hole links the core circle; one outside does not
    assert classify_line(OBS, LineQuery((0.0, 0.0, 0.0), (0.0, 0.0, 1.0))) == (1,)
    assert classify_line(OBS, LineQuery((4.0, 0.0, 0.0), (0.0, 0.0, 1.0))) == (0,)
    assert classify_line(OBS, LineQuery((0.0, 0.0, 0.0), (0.0, 0.0, -1.0))) == (-1,)


def test_line_hitting_obstacle_is_refused():
    with pytest.raises(LineIntersectsObstacle):
        classify_line(OBS, LineQuery((2.0, 0.0, 0.0), (0.0, 0.0, 1.0)))


def test_closure_radius_must_enclose_obstacle():
    with pytest.raises(RadiusTooSmall):
        closure_curve(OBS, LineQuery((0.0, 0.0, 0.0), (0.0, 0.0, 1.0)), 2.0)


def test_closure_curve_is_closed():
    c = closure_curve(OBS, LineQuery((0.3, -0.1, 0.0), (0.1, 0.2, 1.0)), 5.0)
    assert c.closure_error() < 1e-10


@given(st.floats(-1.2, 1.2), st.floats(-1.2, 1.2), st.floats(-0.6, 0.6))
def test_label_independent_of_closure_radius_and_arc(a, b, tilt):
    line = LineQuery((a, b, 0.0), unit([tilt, 0.2, 1.0]))
    if OBS.line_distance(line.base, line.direction) <= OBS.collar:
        return
    ref = classify_line(OBS, line)
    for R in (6.0, 12.0, 30.0):
        for arc in (0, 1):
            assert classify_line(OBS, line, R=R, arc_choice=arc) == ref


def test_hopf_link_via_curve_linking():
    c = closure_curve(OBS, LineQuery((0.0, 0.0, 0.0), (0.0, 0.0, 1.0)), 5.0)
    (val,) = curve_linking(c, OBS)
    assert abs(val - 1.0) < 1e-3


def test_gamma_curve_hull_check():
    x, y = np.array([0.0, 5.0, 0.0]), np.array([0.0, 5.2, 0.0])
    v = unit([1.0, 0.0, 0.0])
    c = gamma_curve(x, v, y, v, 3.0, OBS)
    assert c.closure_error() < 1e-12
    with pytest.raises(ConvexHullViolation):
        gamma_curve(np.array([0.0, 0.5, 0.0]), v, np.array([0.0, -0.5, 0.0]), -v, 3.0, OBS)


def test_plane_check():
    assert lambda_rec_check(OBS, (0.0, 0.0, 3.0), (0.0, 0.0, 1.0))
    assert not lambda_rec_check(OBS, (0.0, 0.0, 0.0), (0.0, 0.0, 1.0))
    assert not lambda_rec_check(OBS, (0.0, 0.0, 0.0), (1.0, 0.0, 0.0))
