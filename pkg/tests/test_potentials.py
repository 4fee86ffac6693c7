import numpy as np
import pytest
from hypothesis import given, strategies as st

from kgscatter.errors import DecayClassError, DomainError, EvaluationTooCloseToDisk, FluxMismatch
from kgscatter.geometry import Obstacle, Torus
from kgscatter.kernels import biot_savart_polyline
from kgscatter.potentials import (
    GaussianBumpField,
    GaussianGauge,
    GaugeTransformedPotential,
    InversePowerElectric,
    SphereFunction,
    a_infinity,
    circular_loop_field,
    circulation,
    curl_fd,
    decay_slope,
    divergence_fd,
    gauge_between,
    hole_loop,
    iota,
    make_ab_torus_potential,
    make_coulomb_potential,
    make_longrange_potential,
    radial_component_bound,
    smooth_step,
    unit_rows,
)

TORUS = Torus((0.0, 0.0, 0.0), (0.0, 0.0, 1.0), 2.0, 0.5)
OBS = Obstacle((TORUS,))
F = SphereFunction(linear=(0.3, -0.2, 0.1), quadratic=((0.1, 0.05, 0.0), (0.05, -0.2, 0.0), (0.0, 0.0, 0.1)))

unit_vectors = st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)).filter(
    lambda t: np.linalg.norm(t) > 0.1).map(lambda t: np.asarray(t) / np.linalg.norm(t))


def test_iota_values():
    # hand-evaluated: (1 + r)^-min(a, b) + (1 + r)^-(a + b - 2)
    assert iota(3, 3, 0.0) == pytest.approx(2.0)
    assert iota(3, 3, 1.0) == pytest.approx(0.125 + 0.0625)
    assert iota(2, 2, 0.0) == pytest.approx(2.0)
    assert iota(3, 3, np.array([0.0, 0.0, 1.0])) == pytest.approx(0.1875)
    with pytest.raises(DomainError):
        iota(1, 1, 0.0)


def test_smooth_step_shape():
    r = np.array([0.0, 1.0, 1.5, 2.0, 3.0])
    s = smooth_step(r, 1.0, 2.0)
    assert s[0] == 0 and s[1] == 0 and s[3] == 1 and s[4] == 1
    assert s[2] == pytest.approx(0.5)


def test_bump_field_divergence_free_and_potential_consistent():
    B = GaussianBumpField(center=(0.2, 0.0, -0.1), direction=(0.3, 0.1, 1.0), amplitude=0.7, width=0.8)
    pts = np.random.default_rng(1).normal(size=(12, 3))
    assert np.max(np.abs(divergence_fd(B, pts, 1e-4))) < 1e-6
    assert np.allclose(curl_fd(B.coulomb_potential, pts, 1e-4), B(pts), atol=1e-6)


def test_quadrature_coulomb_matches_closed_form():
    B = GaussianBumpField(amplitude=0.5, width=0.7)
    Aq = make_coulomb_potential(B)
    Aa = make_coulomb_potential(B, method="analytic")
    pts = np.array([[0.3, 0.2, 0.1], [1.5, -0.4, 0.2], [3.0, 1.0, 0.0]])
    assert np.allclose(Aq(pts), Aa(pts), atol=1e-6)


def test_loop_field_matches_polyline_biot_savart():
    pts = np.array([[0.5, 0.3, 0.4], [3.0, -1.0, 0.5], [0.01, 0.0, 1.0], [0.0, 0.0, -2.0]])
    t = np.linspace(0, 2 * np.pi, 6000, endpoint=False)
    loop = np.stack([2 * np.cos(t), 2 * np.sin(t), 0 * t], axis=1)
    assert np.allclose(circular_loop_field(pts, (0, 0, 0), (0, 0, 1), 2.0), biot_savart_polyline(pts, loop), atol=1e-6)
    with pytest.raises(EvaluationTooCloseToDisk):
        circular_loop_field(np.array([[2.0, 0.0, 0.0]]), (0, 0, 0), (0, 0, 1), 2.0)


@pytest.mark.parametrize("flux", [np.pi / 3, np.pi, 2 * np.pi + 0.5])
def test_ab_torus_flux_and_zero_field(flux):
    A = make_ab_torus_potential(OBS, 0, flux)
    assert circulation(A, hole_loop(TORUS), n=128) == pytest.approx(flux, abs=1e-8)
    pts = np.array([[0.3, 0.1, 1.0], [4.0, 0.0, 0.5], [0.0, 0.0, 0.0]])
    assert np.max(np.abs(curl_fd(A, pts, 1e-4))) < 1e-6


@given(unit_vectors)
def test_longrange_tail_limit(u):
    A, _ = make_longrange_potential(F)
    for tau in (10.0, 100.0):
        assert np.allclose(tau * A(tau * u), F.tangential_grad(u), atol=1e-12)
    assert abs(np.dot(F.tangential_grad(u), u)) < 1e-12


def test_a_infinity_extrapolation():
    A, _ = make_longrange_potential(F)
    v = np.array([0.6, 0.0, 0.8])
    assert np.allclose(a_infinity(A, v), F.tangential_grad(v), atol=1e-6)
    B = GaussianBumpField(amplitude=0.5, width=0.7)
    assert np.allclose(a_infinity(make_coulomb_potential(B, method="analytic"), v), 0.0, atol=1e-6)


def test_radial_component_rejected():
    class Radial:
        obstacle = None

        def __call__(self, x):
            r = np.linalg.norm(x, axis=-1, keepdims=True)
            return 0.5 * x / r**2

    with pytest.raises(DecayClassError):
        a_infinity(Radial(), [0, 0, 1])
    A, _ = make_longrange_potential(F)
    assert radial_component_bound(A, 3.0) < 1e-12


def test_decay_slope_of_inverse_power():
    E = InversePowerElectric(1.0, 3.0, 1.0)
    assert decay_slope(E, 20.0, 200.0) == pytest.approx(-3.0, abs=0.02)
    A, _ = make_longrange_potential(F)
    assert decay_slope(A, 20.0, 200.0) == pytest.approx(-1.0, abs=0.01)


def test_gauge_transformed_tagging():
    A = make_ab_torus_potential(OBS, 0, 1.0)
    assert GaugeTransformedPotential(A, GaussianGauge(0.5, (3.0, 0.0, 0.0))).tag == "SR"
    _, tail = make_longrange_potential(F)
    assert GaugeTransformedPotential(A, tail).tag == "LRdelta"


def test_gauge_between_recovers_gauge():
    A = make_ab_torus_potential(OBS, 0, 1.0)
    lam = GaussianGauge(0.4, (3.0, 1.0, 0.0), 1.0)
    A2 = GaugeTransformedPotential(A, lam)
    g = gauge_between(A, A2, anchor=(0.0, 0.0, 3.0), check_point=(3.2, 0.9, 0.3))
    x = np.array([3.2, 0.9, 0.3])
    assert g.value(x) == pytest.approx(lam.value(x) - lam.value(np.array([0.0, 0.0, 3.0])), abs=1e-8)


def test_gauge_between_refuses_flux_change():
    A1 = make_ab_torus_potential(OBS, 0, 1.0)
    A2 = make_ab_torus_potential(OBS, 0, 1.5)
    with pytest.raises(FluxMismatch):
        gauge_between(A1, A2)


def test_sphere_function_tangential():
    u = unit_rows(np.random.default_rng(3).normal(size=(10, 3)))
    g = F.tangential_grad(u)
    assert np.allclose(np.sum(g * u, axis=1), 0.0, atol=1e-14)
    assert SphereFunction(const=2.0).is_constant()
