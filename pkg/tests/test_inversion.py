import numpy as np
import pytest
from hypothesis import given, strategies as st

from kgscatter.errors import InsufficientAngles, ModeMismatch, NotDetermined, PlaneBlocked, UnwrapAmbiguity
from kgscatter.geometry import Obstacle, Torus, unit
from kgscatter.inversion import (
    SceneOracle,
    acquire_dataset,
    acquire_planar,
    fbp,
    planar_directions,
    reconstruct_A0,
    recover_Ainf,
    recover_flux_mod,
    recover_Phi_L,
    unwrap_grid,
    wrap,
    wrap_centered,
)
from kgscatter.potentials import GaussianElectric, SphereFunction, make_ab_torus_potential, make_longrange_potential

TORUS = Torus((0.0, 0.0, 0.0), (0.0, 0.0, 1.0), 2.0, 0.5)
OBS = Obstacle((TORUS,))


@given(st.floats(-100, 100))
def test_wrap_ranges(t):
    w = wrap(t)
    c = wrap_centered(t)
    assert 0 <= w < 2 * np.pi
    assert -np.pi < c <= np.pi + 1e-12
    assert abs(np.exp(1j * w) - np.exp(1j * t)) < 1e-9
    assert abs(np.exp(1j * c) - np.exp(1j * t)) < 1e-9


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-0.5, 0.5))
def test_unwrap_recovers_smooth_surface(a, b, c):
    x = np.linspace(-1, 1, 21)
    X, Y = np.meshgrid(x, x, indexing="ij")
    true = a * X + b * Y + c * X * Y + 0.4
    got = unwrap_grid(wrap(true))
    assert np.allclose(got, true, atol=1e-9)


def test_unwrap_refuses_aliased_data():
    # the third sample cannot be reached from the linear trend within half a period
    with pytest.raises(UnwrapAmbiguity):
        unwrap_grid(np.array([0.0, 3.0, 0.0]), seed=(0, 0))


def test_fbp_of_offcentre_gaussian():
    w, c = 0.6, np.array([0.5, -0.3])
    n_ang, n_off = 90, 161
    phis = np.pi * np.arange(n_ang) / n_ang
    offs = np.linspace(-4, 4, n_off)
    normals = np.stack([-np.sin(phis), np.cos(phis)], axis=1)
    sino = w * np.sqrt(np.pi) * np.exp(-((offs[None, :] - (normals @ c)[:, None]) ** 2) / w**2)
    us = np.linspace(-1.5, 1.5, 31)
    img = fbp(sino, phis, offs, us, us)
    U, W = np.meshgrid(us, us)
    truth = np.exp(-((U - c[0]) ** 2 + (W - c[1]) ** 2) / w**2)
    assert np.linalg.norm(img - truth) / np.linalg.norm(truth) < 0.02
    with pytest.raises(InsufficientAngles):
        fbp(sino[:1], phis[:1], offs, us, us)


def test_planar_directions_are_orthonormal():
    a, b = np.eye(3)[0], np.eye(3)[1]
    phis, nus, ns = planar_directions(a, b, 8)
    assert np.allclose(np.sum(nus * ns, axis=1), 0)
    assert np.allclose(np.linalg.norm(nus, axis=1), 1)


def test_reconstruct_gaussian_A0():
    E = GaussianElectric(0.8, (0.3, 0.0, 0.0), 0.7)
    ds = acquire_planar(SceneOracle(None, E), np.zeros(3), [1, 0, 0], [0, 1, 0], n_ang=32, n_off=96)
    grid = reconstruct_A0(ds, tile_half=1.5, n_tile=32, truth=E)
    assert grid.rel_l2_error() < 0.05
    assert grid.center_value == pytest.approx(float(E(np.zeros(3))), abs=0.03)
    with pytest.raises(InsufficientAngles):
        reconstruct_A0(ds[:4])


def test_planes_through_obstacle_refused():
    A = make_ab_torus_potential(OBS, 0, 1.0)
    with pytest.raises(PlaneBlocked):
        acquire_planar(SceneOracle(A), np.zeros(3), [1, 0, 0], [0, 1, 0], n_ang=4, n_off=8, obstacle=OBS)


@pytest.mark.parametrize("flux", [np.pi / 3, 2 * np.pi + np.pi / 3])
def test_flux_recovered_mod_two_pi(flux):
    A = make_ab_torus_potential(OBS, 0, flux)
    s = np.linspace(-3.5, 3.5, 8)
    ds = acquire_dataset(SceneOracle(A), [0, 0, 1], s, s, obstacle=OBS, classify=True, wrapped=True)
    got = recover_flux_mod(ds, (1,), (0,))
    assert abs(wrap_centered(got - flux)) < 1e-6
    with pytest.raises(ModeMismatch):
        recover_flux_mod(ds, (1,), (0,), A0_zero=False, modulus=2 * np.pi)


def test_long_range_flux_from_one_far_line():
    f = SphereFunction(linear=(0.3, -0.2, 0.1))
    A, _ = make_longrange_potential(f)
    v = unit([0.2, 0.5, 1.0])
    got = recover_Phi_L(SceneOracle(A), v)
    assert got == pytest.approx(float(f(v) - f(-v)), abs=1e-7)


def test_single_limit_refused():
    with pytest.raises(NotDetermined):
        recover_Ainf()
