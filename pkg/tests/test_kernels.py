import numpy as np
from hypothesis import given, strategies as st

from kgscatter import kernels


def circle(center, e1, e2, r, n=400):
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    return np.asarray(center) + r * (np.cos(t)[:, None] * np.asarray(e1) + np.sin(t)[:, None] * np.asarray(e2))


def test_hopf_link_is_plus_or_minus_one():
    a = circle([0, 0, 0], [1, 0, 0], [0, 1, 0], 1.0)
    b = circle([1, 0, 0], [1, 0, 0], [0, 0, 1], 0.5)
    for f in (kernels.linking_number_numba, kernels.linking_number_numpy):
        assert abs(abs(f(a, b)) - 1.0) < 1e-9
        assert abs(f(a, b) + f(a, b[::-1])) < 1e-9
        assert abs(f(a, b) - f(b, a)) < 1e-9


def test_unlinked_circles():
    a = circle([0, 0, 0], [1, 0, 0], [0, 1, 0], 1.0)
    b = circle([3, 0, 0], [1, 0, 0], [0, 0, 1], 0.5)
    assert abs(kernels.linking_number(a, b)) < 1e-9


def test_double_wound_curve_links_twice():
    t = np.linspace(0, 2 * np.pi, 800, endpoint=False)
    # (2, q) torus-knot style curve winding twice through the hole of the unit circle
    R, r = 1.0, 0.4
    curve = np.stack([(R + r * np.cos(t)) * 0 + R + r * np.cos(2 * t),
                      np.zeros_like(t) + 0.0 * t, r * np.sin(2 * t)], axis=1)
    core = circle([0, 0, 0], [1, 0, 0], [0, 1, 0], 1.0)
    assert abs(abs(kernels.linking_number(curve, core)) - 2.0) < 1e-9


def test_biot_savart_on_axis_closed_form():
    # unit current on a circle of radius a: B_z(z) = a^2 / (2 (a^2 + z^2)^1.5)
    a = 1.3
    loop = circle([0, 0, 0], [1, 0, 0], [0, 1, 0], a, n=4000)
    z = np.array([0.0, 0.5, 2.0])
    pts = np.stack([np.zeros(3), np.zeros(3), z], axis=1)
    exact = a * a / (2 * (a * a + z * z) ** 1.5)
    for f in (kernels.biot_savart_polyline_numba, kernels.biot_savart_polyline_numpy):
        B = f(pts, loop)
        assert np.allclose(B[:, 2], exact, rtol=1e-5)
        assert np.allclose(B[:, :2], 0.0, atol=1e-12)


@given(st.integers(0, 10_000))
def test_compiled_and_numpy_twins_agree(seed):
    rng = np.random.default_rng(seed)
    a = circle(rng.normal(size=3) * 0.2, [1, 0, 0], [0, 1, 0], 1.0, n=64)
    b = circle([1, 0, 0] + rng.normal(size=3) * 0.1, [1, 0, 0], [0, 0, 1], 0.5, n=64)
    assert abs(kernels.linking_number_numba(a, b) - kernels.linking_number_numpy(a, b)) < 1e-10
    pts = rng.normal(size=(20, 3)) * 3
    assert np.allclose(kernels.biot_savart_polyline_numba(pts, a), kernels.biot_savart_polyline_numpy(pts, a),
                       rtol=1e-10, atol=1e-12)
    filt = rng.normal(size=(8, 32))
    ang = np.pi * np.arange(8) / 8
    xs = np.linspace(-1, 1, 7)
    assert np.allclose(kernels.backproject_numba(filt, ang, -2.0, 4 / 31, xs, xs),
                       kernels.backproject_numpy(filt, ang, -2.0, 4 / 31, xs, xs), atol=1e-12)


def test_backend_flag(monkeypatch):
    from kgscatter import _jit

    monkeypatch.setenv("KGSCATTER_DISABLE_JIT", "1")
    assert _jit.backend() == "numpy"
    monkeypatch.setenv("KGSCATTER_DISABLE_JIT", "0")
    assert _jit.backend() in ("numba", "numpy")

