import numpy as np
import pytest
from hypothesis import given, strategies as st

from kgscatter.errors import SlowDecay
from kgscatter.geometry import LineQuery, Obstacle, Torus, unit
from kgscatter.lineflux import (
    angular_derivative_xray,
    field_moment,
    flux_record,
    hole_flux,
    long_range_flux,
    long_range_flux_from_ainf,
    xray,
    xray_batch,
)
from kgscatter.potentials import (
    GaussianBumpField,
    GaussianElectric,
    SphereFunction,
    make_ab_torus_potential,
    make_coulomb_potential,
    make_longrange_potential,
)

TORUS = Torus((0.0, 0.0, 0.0), (0.0, 0.0, 1.0), 2.0, 0.5)
OBS = Obstacle((TORUS,))
F = SphereFunction(linear=(0.3, -0.2, 0.1), quadratic=((0.1, 0.05, 0.0), (0.05, -0.2, 0.0), (0.0, 0.0, 0.1)))


@given(st.floats(-2.0, 2.0), st.floats(0.3, 2.0))
def test_gaussian_line_integral_closed_form(d, w):
    # int a exp(-(d^2 + t^2)/w^2) dt = a w sqrt(pi) exp(-d^2/w^2)
    E = GaussianElectric(0.7, (0.0, 0.0, 0.0), w)
    s = xray(None, E, LineQuery((0.0, d, 0.0), (1.0, 0.0, 0.0)))
    assert s.int_A0 == pytest.approx(0.7 * w * np.sqrt(np.pi) * np.exp(-d * d / w / w), abs=1e-10)
    assert s.int_A == 0.0


def test_batch_matches_single_lines():
    E = GaussianElectric(0.7, (0.1, 0.0, 0.0), 0.9)
    A = make_coulomb_potential(GaussianBumpField(amplitude=0.5, width=0.7), method="analytic")
    rng = np.random.default_rng(0)
    bases = rng.normal(size=(6, 3))
    v = unit([0.2, 0.3, 1.0])
    ia, i0, _ = xray_batch(A, E, bases, v)
    for k in range(6):
        s = xray(A, E, LineQuery(bases[k], v))
        assert ia[k] == pytest.approx(s.int_A, abs=1e-9)
        assert i0[k] == pytest.approx(s.int_A0, abs=1e-9)


def test_ab_torus_axis_line_picks_up_flux():
    # the loop field integrates to 1 along the axis of the loop
    A = make_ab_torus_potential(OBS, 0, 0.8)
    assert xray(A, None, LineQuery((0.0, 0.0, 0.0), (0.0, 0.0, 1.0))).int_A == pytest.approx(0.8, abs=1e-9)
    assert xray(A, None, LineQuery((5.0, 0.0, 0.0), (0.0, 0.0, 1.0))).int_A == pytest.approx(0.0, abs=1e-9)


def test_hole_flux_by_class():
    A = make_ab_torus_potential(OBS, 0, 1.1)
    v = unit([0.1, 0.0, 1.0])
    assert hole_flux(A, OBS, (1,), v) == pytest.approx(1.1, abs=1e-8)
    assert hole_flux(A, OBS, (0,), v) == pytest.approx(0.0, abs=1e-8)
    rec = flux_record(A, OBS, (-1,), -v)
    assert rec.F_h == pytest.approx(-1.1, abs=1e-8)
    assert rec.Phi_L == pytest.approx(0.0, abs=1e-8)


@pytest.mark.parametrize("v", [[1, 0, 0], [0, 1, 0], [0.3, 0.4, 0.866]])
def test_long_range_flux_is_gauge_limit_difference(v):
    A, _ = make_longrange_potential(F)
    v = unit(v)
    expected = float(F(v) - F(-v))
    assert long_range_flux(A, v) == pytest.approx(expected, abs=1e-6)
    assert long_range_flux_from_ainf(A, v) == pytest.approx(expected, abs=1e-8)
    assert long_range_flux_from_ainf(A, v, use_analytic=False) == pytest.approx(expected, abs=1e-4)


def test_full_line_of_tail_equals_limit_difference():
    A, _ = make_longrange_potential(F)
    v = unit([0.3, -0.5, 0.2])
    s = xray(A, None, LineQuery((0.4, 0.1, 0.2), v))
    assert s.int_A == pytest.approx(float(F(v) - F(-v)), abs=1e-8)


def test_slow_decay_detected():
    class Coulombic:
        obstacle = None

        def __call__(self, x):
            r = np.linalg.norm(x, axis=-1, keepdims=True)
            return np.broadcast_to([1.0, 0.0, 0.0], np.shape(x)) / (1 + r)

    with pytest.raises(SlowDecay):
        xray(Coulombic(), None, LineQuery((0.0, 1.0, 0.0), (1.0, 0.0, 0.0)))


def test_angular_derivative_of_compact_field_is_moment():
    B = GaussianBumpField(amplitude=0.6, width=0.8)
    A = make_coulomb_potential(B, method="analytic")
    x = np.array([0.0, 0.4, 0.2])
    v = unit([1.0, 0.0, 0.0])
    w = np.array([0.0, 1.0, 0.0])
    d = angular_derivative_xray(A, x, v, w)
    assert d.value == pytest.approx(field_moment(B, x, v, w), abs=1e-6)
