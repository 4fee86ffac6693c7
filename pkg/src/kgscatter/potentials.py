"""Electromagnetic data: magnetic fields, electric potentials, vector potentials.

All evaluators are vectorised over a trailing axis of length 3: ``A(x)`` maps an
array of shape (..., 3) to (..., 3), ``A0(x)`` and gauge functions map to (...).
Natural units, hbar = c = 1; fluxes are in radians of phase.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .errors import (
    DecayClassError,
    DomainError,
    EvaluationTooCloseToDisk,
    FluxMismatch,
    NonConvergent,
    QuadratureNonConvergent,
)
from .kernels import linking_number
from .geometry import ArcSegment, ClosedCurve, Obstacle, StraightSegment, Torus, orthonormal_basis, unit

# --------------------------------------------------------------------------
# comparison function
# --------------------------------------------------------------------------


def iota(a: float, b: float, x) -> float | np.ndarray:
    """Two-branch comparison function; logarithmic branch when a == 2 or b == 2."""
    if a < 0 or b < 0 or a + b <= 2:
        raise DomainError(f"iota needs a, b >= 0 and a + b > 2 (got a={a}, b={b})")
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1) if x.ndim >= 1 and x.shape[-1] == 3 else np.abs(x)
    if a == 2 or b == 2:
        return (1 + r) ** -2 + np.log(np.e + r) / (1 + r) ** (a + b - 2)
    return (1 + r) ** -min(a, b) + (1 + r) ** -(a + b - 2)


# --------------------------------------------------------------------------
# smooth cutoff and sphere functions
# --------------------------------------------------------------------------


def _bump_f(t):
    t = np.asarray(t, float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def _bump_df(t):
    t = np.asarray(t, float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos]) / t[pos] ** 2
    return out


def smooth_step(r, r0: float, r1: float):
    """C-infinity step: 0 for r <= r0, 1 for r >= r1."""
    t = (np.asarray(r, float) - r0) / (r1 - r0)
    f, g = _bump_f(t), _bump_f(1.0 - t)
    return f / (f + g)


def smooth_step_derivative(r, r0: float, r1: float):
    t = (np.asarray(r, float) - r0) / (r1 - r0)
    f, g = _bump_f(t), _bump_f(1.0 - t)
    df, dg = _bump_df(t), _bump_df(1.0 - t)
    return (df * g + f * dg) / (f + g) ** 2 / (r1 - r0)


@dataclass(frozen=True)
class SphereFunction:
    """Polynomial ``const + c.u + u^T M u + k u_x u_y u_z`` restricted to unit vectors u."""

    const: float = 0.0
    linear: tuple = (0.0, 0.0, 0.0)
    quadratic: tuple = ((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), (0.0, 0.0, 0.0))
    cubic_xyz: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "linear", tuple(float(c) for c in self.linear))
        M = np.asarray(self.quadratic, float)
        M = 0.5 * (M + M.T)
        object.__setattr__(self, "quadratic", tuple(tuple(float(c) for c in row) for row in M))

    @property
    def c(self):
        return np.asarray(self.linear)

    @property
    def M(self):
        return np.asarray(self.quadratic)

    def __call__(self, u):
        u = np.asarray(u, float)
        return (
            self.const
            + u @ self.c
            + np.einsum("...i,ij,...j->...", u, self.M, u)
            + self.cubic_xyz * u[..., 0] * u[..., 1] * u[..., 2]
        )

    def ambient_grad(self, u):
        u = np.asarray(u, float)
        g = np.broadcast_to(self.c, u.shape) + 2.0 * u @ self.M
        cub = self.cubic_xyz * np.stack([u[..., 1] * u[..., 2], u[..., 0] * u[..., 2], u[..., 0] * u[..., 1]], axis=-1)
        return g + cub

    def tangential_grad(self, u):
        """Gradient along the sphere at unit vectors ``u``."""
        u = np.asarray(u, float)
        g = self.ambient_grad(u)
        return g - np.sum(g * u, axis=-1, keepdims=True) * u

    def is_constant(self):
        return not (np.any(self.c) or np.any(self.M - np.trace(self.M) / 3 * np.eye(3)) or self.cubic_xyz)

    def to_dict(self):
        return {
            "const": self.const,
            "linear": list(self.linear),
            "quadratic": [list(r) for r in self.quadratic],
            "cubic_xyz": self.cubic_xyz,
        }


# --------------------------------------------------------------------------
# magnetic fields
# --------------------------------------------------------------------------


class MagneticField:
    """Divergence-free field B outside the obstacle."""

    decay: float = np.inf
    support_radius: float = np.inf
    center = np.zeros(3)

    def __call__(self, x):
        raise NotImplementedError

    def is_zero(self):
        return False


class ZeroField(MagneticField):
    support_radius = 0.0

    def __call__(self, x):
        return np.zeros(np.shape(x))

    def is_zero(self):
        return True


@dataclass
class GaussianBumpField(MagneticField):
    """``B = curl curl(g e)`` with ``g = b0 exp(-|x - c|^2 / s^2)``.

    A localised, divergence-free field with zero flux through every closed
    surface; its Coulomb-gauge potential is ``grad g x e`` in closed form.
    """

    center: tuple = (0.0, 0.0, 0.0)
    direction: tuple = (0.0, 0.0, 1.0)
    amplitude: float = 1.0
    width: float = 1.0

    def __post_init__(self):
        self.center = np.asarray(self.center, float)
        self.direction = unit(self.direction)
        self.decay = np.inf
        self.support_radius = self.width * math.sqrt(math.log(1e18))

    def _g(self, x):
        d = np.asarray(x, float) - self.center
        return d, self.amplitude * np.exp(-np.sum(d * d, axis=-1) / self.width**2)

    def __call__(self, x):
        d, g = self._g(x)
        s2 = self.width**2
        e = self.direction
        de = d @ e
        # (e . grad) grad g - e lap g
        hess_e = g[..., None] * (4.0 * de[..., None] * d / s2**2 - 2.0 * e / s2)
        lap = g * (4.0 * np.sum(d * d, axis=-1) / s2**2 - 6.0 / s2)
        return hess_e - lap[..., None] * e

    def coulomb_potential(self, x):
        d, g = self._g(x)
        grad = -2.0 * d / self.width**2 * g[..., None]
        return np.cross(grad, self.direction)


# --------------------------------------------------------------------------
# electric potentials
# --------------------------------------------------------------------------


class ElectricPotential:
    decay: float = np.inf

    def __call__(self, x):
        raise NotImplementedError

    def is_zero(self):
        return False


class ZeroElectric(ElectricPotential):
    def __call__(self, x):
        return np.zeros(np.shape(x)[:-1])

    def is_zero(self):
        return True


def _radius(x, center, slab):
    d = np.asarray(x, float) - center
    if slab:
        d = d[..., :2]
    return np.linalg.norm(d, axis=-1)


@dataclass
class GaussianElectric(ElectricPotential):
    """``a exp(-|x - c|^2 / w^2)``; with ``slab`` the x3 coordinate is ignored."""

    amplitude: float = 1.0
    center: tuple = (0.0, 0.0, 0.0)
    width: float = 1.0
    slab: bool = False

    def __post_init__(self):
        self.center = np.asarray(self.center, float)
        self.decay = np.inf

    def __call__(self, x):
        r = _radius(x, self.center, self.slab)
        return self.amplitude * np.exp(-(r / self.width) ** 2)


@dataclass
class InversePowerElectric(ElectricPotential):
    """``a (1 + |x - c|^2 / l^2)^(-zeta/2)``, optionally switched off smoothly
    between ``window[0]`` and ``window[1]`` (radii)."""

    amplitude: float = 1.0
    zeta: float = 3.0
    scale: float = 1.0
    center: tuple = (0.0, 0.0, 0.0)
    window: tuple | None = None
    slab: bool = False

    def __post_init__(self):
        self.center = np.asarray(self.center, float)
        if self.zeta <= 1:
            raise DomainError("electric decay exponent must exceed 1")
        self.decay = float(self.zeta)

    def __call__(self, x):
        r = _radius(x, self.center, self.slab)
        val = self.amplitude * (1.0 + (r / self.scale) ** 2) ** (-0.5 * self.zeta)
        if self.window is not None:
            val = val * (1.0 - smooth_step(r, self.window[0], self.window[1]))
        return val


class SumElectric(ElectricPotential):
    def __init__(self, parts):
        self.parts = list(parts)
        self.decay = min([p.decay for p in self.parts], default=np.inf)

    def __call__(self, x):
        out = np.zeros(np.shape(x)[:-1])
        for p in self.parts:
            out = out + p(x)
        return out

    def is_zero(self):
        return all(p.is_zero() for p in self.parts)


# --------------------------------------------------------------------------
# gauge functions
# --------------------------------------------------------------------------


class GaugeFunction:
    """Scalar gauge function with angular limit ``lambda_inf``."""

    def value(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def lambda_inf(self, u):
        raise NotImplementedError

    def lambda_inf_tangential_grad(self, u):
        """Tangential gradient of the angular limit (the ``A_inf`` it induces)."""
        return np.zeros(np.shape(u))


@dataclass
class TailGauge(GaugeFunction):
    """``chi(|x|) f(x/|x|)`` with chi a smooth step from r0 to 2 r0."""

    f: SphereFunction
    r0: float = 1.0

    def value(self, x):
        x = np.asarray(x, float)
        r = np.linalg.norm(x, axis=-1)
        safe = np.where(r > 0, r, 1.0)
        return smooth_step(r, self.r0, 2 * self.r0) * self.f(x / safe[..., None])

    def grad(self, x):
        x = np.asarray(x, float)
        r = np.linalg.norm(x, axis=-1)
        safe = np.where(r > 0, r, 1.0)
        u = x / safe[..., None]
        chi = smooth_step(r, self.r0, 2 * self.r0)
        dchi = smooth_step_derivative(r, self.r0, 2 * self.r0)
        out = dchi[..., None] * u * self.f(u)[..., None] + chi[..., None] * self.f.tangential_grad(u) / safe[..., None]
        return np.where((r > self.r0)[..., None], out, 0.0)

    def lambda_inf(self, u):
        return self.f(unit_rows(u))

    def lambda_inf_tangential_grad(self, u):
        return self.f.tangential_grad(unit_rows(u))


@dataclass
class GaussianGauge(GaugeFunction):
    """Compactly concentrated gauge ``c exp(-|x - p|^2 / w^2)`` (zero angular limit).

    With ``slab`` the x3 coordinate is ignored (a gauge for x3-independent scenes).
    """

    amplitude: float = 1.0
    center: tuple = (0.0, 0.0, 0.0)
    width: float = 1.0
    slab: bool = False

    def __post_init__(self):
        self.center = np.asarray(self.center, float)

    def _offset(self, x):
        d = np.asarray(x, float) - self.center
        if self.slab:
            d = d * np.array([1.0, 1.0, 0.0])
        return d

    def value(self, x):
        d = self._offset(x)
        return self.amplitude * np.exp(-np.sum(d * d, axis=-1) / self.width**2)

    def grad(self, x):
        d = self._offset(x)
        return (-2.0 * d / self.width**2) * self.value(x)[..., None]

    def lambda_inf(self, u):
        return np.zeros(np.shape(u)[:-1])


class SumGauge(GaugeFunction):
    def __init__(self, parts):
        self.parts = list(parts)

    def value(self, x):
        return sum(p.value(x) for p in self.parts)

    def grad(self, x):
        return sum(p.grad(x) for p in self.parts)

    def lambda_inf(self, u):
        return sum(p.lambda_inf(u) for p in self.parts)

    def lambda_inf_tangential_grad(self, u):
        return sum(p.lambda_inf_tangential_grad(u) for p in self.parts)


def unit_rows(u):
    u = np.asarray(u, float)
    return u / np.linalg.norm(u, axis=-1, keepdims=True)


# --------------------------------------------------------------------------
# vector potentials
# --------------------------------------------------------------------------


class VectorPotential:
    """Base class.  ``tag`` is one of 'SR', 'LR', 'LRdelta'.

    ``fluxes`` maps torus index -> circulation around that torus's hole loop.
    ``field`` is the magnetic field it generates outside the obstacle.
    """

    tag: str = "SR"
    zeta: float = 2.0
    delta: float | None = None
    obstacle: Obstacle | None = None

    def __init__(self):
        self.fluxes: dict = {}
        self.field: MagneticField = ZeroField()

    def __call__(self, x):
        raise NotImplementedError

    def a_inf_analytic(self, u):
        """Closed-form ``lim tau A(tau u)`` when known, else None."""
        return None

    def lambda_inf_analytic(self, u):
        return None

    def __add__(self, other):
        return SumPotential([self, other])

    def is_zero(self):
        return False


class ZeroPotential(VectorPotential):
    def __init__(self):
        super().__init__()
        self.zeta = np.inf

    def __call__(self, x):
        return np.zeros(np.shape(x))

    def a_inf_analytic(self, u):
        return np.zeros(np.shape(u))

    def lambda_inf_analytic(self, u):
        return np.zeros(np.shape(u)[:-1])

    def is_zero(self):
        return True


_TAG_ORDER = {"SR": 0, "LRdelta": 1, "LR": 2}


class SumPotential(VectorPotential):
    def __init__(self, parts):
        super().__init__()
        flat = []
        for p in parts:
            flat.extend(p.parts if isinstance(p, SumPotential) else [p])
        self.parts = flat
        self.tag = max((p.tag for p in flat), key=_TAG_ORDER.get, default="SR")
        self.zeta = min((p.zeta for p in flat), default=np.inf)
        deltas = [p.delta for p in flat if p.delta is not None]
        self.delta = min(deltas) if deltas else None
        for p in flat:
            for k, v in p.fluxes.items():
                self.fluxes[k] = self.fluxes.get(k, 0.0) + v
        fields = [p.field for p in flat if not p.field.is_zero()]
        self.field = fields[0] if len(fields) == 1 else (SumField(fields) if fields else ZeroField())
        obs = [p.obstacle for p in flat if p.obstacle is not None]
        self.obstacle = obs[0] if obs else None

    def __call__(self, x):
        out = np.zeros(np.shape(x))
        for p in self.parts:
            out = out + p(x)
        return out

    def a_inf_analytic(self, u):
        vals = [p.a_inf_analytic(u) for p in self.parts]
        if any(v is None for v in vals):
            return None
        return sum(vals)

    def lambda_inf_analytic(self, u):
        vals = [p.lambda_inf_analytic(u) for p in self.parts]
        if any(v is None for v in vals):
            return None
        return sum(vals)

    def is_zero(self):
        return all(p.is_zero() for p in self.parts)


class SumField(MagneticField):
    def __init__(self, parts):
        self.parts = list(parts)
        self.support_radius = max(p.support_radius for p in self.parts)
        self.decay = min(p.decay for p in self.parts)

    def __call__(self, x):
        return sum(p(x) for p in self.parts)


def circular_loop_field(x, center, axis, radius):
    """Field of a unit current (mu0 I = 1) on a circle, counterclockwise about ``axis``.

    Closed form via complete elliptic integrals; its circulation around any
    loop equals the linking number with the circle.  Equivalently
    ``grad(Omega) / 4 pi`` up to sign, Omega the solid angle of the spanned disk.
    """
    x = np.asarray(x, float)
    n = np.asarray(axis, float)
    a = float(radius)
    d = x - np.asarray(center, float)
    z = d @ n
    rvec = d - z[..., None] * n
    rho = np.linalg.norm(rvec, axis=-1)
    r2 = rho**2 + z**2
    alpha2 = a * a + r2 - 2 * a * rho
    beta2 = a * a + r2 + 2 * a * rho
    if np.any(np.sqrt(np.maximum(alpha2, 0.0)) < 1e-9):
        raise EvaluationTooCloseToDisk("evaluation point within 1e-9 of the current loop (rim of the spanning disk)")
    beta = np.sqrt(beta2)
    m = 1.0 - alpha2 / beta2
    K = special.ellipk(m)
    E = special.ellipe(m)
    C = 1.0 / np.pi
    bz = C / (2 * alpha2 * beta) * ((a * a - r2) * E + alpha2 * K)
    near = rho < 1e-4 * a
    safe_rho = np.where(near, 1.0, rho)
    brho = C * z / (2 * alpha2 * beta * safe_rho) * ((a * a + r2) * E - alpha2 * K)
    if np.any(near):
        q = a * a + z * z
        bz_axis = 0.5 * a * a * q**-1.5
        d2 = 0.5 * a * a * (-3.0) * (q**-2.5 - 5.0 * z * z * q**-3.5)
        bz = np.where(near, bz_axis - 0.25 * rho**2 * d2, bz)
        brho = np.where(near, 0.75 * a * a * z * rho * q**-2.5, brho)
    radial = rvec / np.where(rho > 0, rho, 1.0)[..., None]
    return brho[..., None] * radial + bz[..., None] * n


class ABTorusPotential(VectorPotential):
    """Field-free potential with flux ``flux`` through the hole of one torus.

    ``A = flux * (loop field of the core circle)``, i.e. ``(flux / 4 pi) grad Omega``
    with Omega the solid angle subtended by the disk the core circle bounds.
    Curl-free outside the core circle, which lies inside the solid torus.
    """

    def __init__(self, torus: Torus, flux: float, torus_index: int = 0, obstacle: Obstacle | None = None):
        super().__init__()
        self.torus = torus
        self.flux = float(flux)
        self.index = torus_index
        self.fluxes = {torus_index: self.flux}
        self.tag = "SR"
        self.zeta = 2.0
        self.obstacle = obstacle

    def __call__(self, x):
        if self.flux == 0.0:
            return np.zeros(np.shape(x))
        t = self.torus
        return self.flux * circular_loop_field(x, t.c, t.a, t.major_radius)

    def a_inf_analytic(self, u):
        return np.zeros(np.shape(u))

    def lambda_inf_analytic(self, u):
        return np.zeros(np.shape(u)[:-1])

    def is_zero(self):
        return self.flux == 0.0


def make_ab_torus_potential(obstacle: Obstacle, torus_index: int, flux: float) -> ABTorusPotential:
    torus = obstacle.tori[torus_index]
    return ABTorusPotential(torus, flux, torus_index, obstacle)


class CoulombPotential(VectorPotential):
    """Coulomb-gauge potential ``(1/4 pi) int B(y) x (x - y)/|x - y|^3 dy``.

    Evaluated in spherical coordinates centred at the evaluation point, which
    removes the 1/r^2 singularity: ``A(x) = -(1/4 pi) int_S2 int_0^inf B(x + r w) x w dr dw``.
    The angular grid is aimed at the field's support ball.
    """

    def __init__(self, B: MagneticField, n_theta=24, n_phi=32, n_r=32, obstacle=None):
        super().__init__()
        if not np.isfinite(B.support_radius):
            raise DomainError("Coulomb construction needs a compactly supported field")
        self.field = B
        self.n = (n_theta, n_phi, n_r)
        self.obstacle = obstacle
        self.tag = "SR"
        self.zeta = 2.0

    def _eval_chunk(self, pts, n_theta, n_phi, n_r):
        B = self.field
        c = np.asarray(B.center, float)
        R = B.support_radius
        gt, wt = np.polynomial.legendre.leggauss(n_theta)
        gr, wr = np.polynomial.legendre.leggauss(n_r)
        phis = 2 * np.pi * np.arange(n_phi) / n_phi
        out = np.zeros_like(pts)
        for i, x in enumerate(pts):
            dvec = c - x
            dist = np.linalg.norm(dvec)
            if B.is_zero() or R == 0:
                continue
            pole = dvec / dist if dist > 0 else np.array([0.0, 0.0, 1.0])
            e1, e2 = orthonormal_basis(pole)
            th_max = np.arcsin(min(1.0, R / dist)) if dist > R else np.pi
            r_lo = max(0.0, dist - R)
            r_hi = dist + R
            th = 0.5 * th_max * (gt + 1.0)
            wth = 0.5 * th_max * wt * np.sin(th)
            r = r_lo + 0.5 * (r_hi - r_lo) * (gr + 1.0)
            w_r = 0.5 * (r_hi - r_lo) * wr
            st, ct = np.sin(th), np.cos(th)
            omega = (
                st[:, None, None] * np.cos(phis)[None, :, None] * e1
                + st[:, None, None] * np.sin(phis)[None, :, None] * e2
                + ct[:, None, None] * pole
            )  # (nt, np, 3)
            y = x + r[None, None, :, None] * omega[:, :, None, :]
            Bv = B(y)
            integrand = np.cross(Bv, np.broadcast_to(omega[:, :, None, :], Bv.shape))
            w = wth[:, None, None] * (2 * np.pi / n_phi) * w_r[None, None, :]
            out[i] = -np.einsum("abc,abck->k", w, integrand) / (4 * np.pi)
        return out

    def evaluate(self, x, refine=1):
        x = np.asarray(x, float)
        pts = x.reshape(-1, 3)
        nt, nph, nr = (int(k * refine) for k in self.n)
        return self._eval_chunk(pts, nt, nph, nr).reshape(x.shape)

    def __call__(self, x):
        return self.evaluate(x)

    def check_convergence(self, x, rtol=1e-5):
        """Compare base and 1.5x-refined quadrature; raise if they disagree."""
        a = self.evaluate(x)
        b = self.evaluate(x, refine=1.5)
        scale = max(np.max(np.abs(b)), 1e-300)
        err = float(np.max(np.abs(a - b)) / scale)
        if err > rtol:
            raise QuadratureNonConvergent(f"Coulomb quadrature refinement changed the result by {err:.3g} (rel)")
        return err

    def a_inf_analytic(self, u):
        return np.zeros(np.shape(u))

    def lambda_inf_analytic(self, u):
        return np.zeros(np.shape(u)[:-1])

    def is_zero(self):
        return self.field.is_zero()


class AnalyticCoulombPotential(VectorPotential):
    """Coulomb-gauge potential of a field that carries a closed form for it."""

    def __init__(self, B: MagneticField, obstacle=None):
        super().__init__()
        self.field = B
        self.obstacle = obstacle
        self.tag = "SR"
        self.zeta = 2.0

    def __call__(self, x):
        if self.field.is_zero():
            return np.zeros(np.shape(x))
        return self.field.coulomb_potential(x)

    def a_inf_analytic(self, u):
        return np.zeros(np.shape(u))

    def lambda_inf_analytic(self, u):
        return np.zeros(np.shape(u)[:-1])

    def is_zero(self):
        return self.field.is_zero()


def make_coulomb_potential(B: MagneticField, method: str = "quadrature", obstacle=None, check_points=None):
    """Coulomb-gauge vector potential of a compactly supported field.

    ``method='quadrature'`` integrates the Biot-Savart kernel numerically (and,
    if ``check_points`` is given, verifies refinement stability there);
    ``method='analytic'`` uses a closed form shipped with the field.
    """
    if B.is_zero():
        z = ZeroPotential()
        z.obstacle = obstacle
        return z
    if method == "analytic":
        if not hasattr(B, "coulomb_potential"):
            raise DomainError("field has no closed-form Coulomb potential")
        return AnalyticCoulombPotential(B, obstacle)
    A = CoulombPotential(B, obstacle=obstacle)
    if check_points is not None:
        A.check_convergence(check_points)
    return A


class GaugeTransformedPotential(VectorPotential):
    """``A + grad(lambda)``."""

    def __init__(self, base: VectorPotential, gauge: GaugeFunction):
        super().__init__()
        self.base = base
        self.gauge = gauge
        self.fluxes = dict(base.fluxes)
        self.field = base.field
        self.obstacle = base.obstacle
        self.zeta = base.zeta
        has_tail = not np.allclose(gauge.lambda_inf_tangential_grad(_probe_dirs()), 0.0)
        self.tag = "LRdelta" if (has_tail or base.tag != "SR") else "SR"
        self.delta = 2.0 if self.tag == "LRdelta" else base.delta

    def __call__(self, x):
        return self.base(x) + self.gauge.grad(x)

    def a_inf_analytic(self, u):
        a = self.base.a_inf_analytic(u)
        if a is None:
            return None
        return a + self.gauge.lambda_inf_tangential_grad(u)

    def lambda_inf_analytic(self, u):
        lb = self.base.lambda_inf_analytic(u)
        if lb is None:
            return None
        return lb + self.gauge.lambda_inf(u)

    def is_zero(self):
        return self.base.is_zero() and isinstance(self.gauge, GaussianGauge) and self.gauge.amplitude == 0


def _probe_dirs():
    rng = np.random.default_rng(7)
    return unit_rows(rng.normal(size=(16, 3)))


class LongRangeTailPotential(VectorPotential):
    """Pure-gauge long-range potential ``grad(chi(|x|) f(x/|x|))``.

    Zero field and zero hole fluxes; beyond ``2 r0`` it is exactly homogeneous of
    degree -1 with angular coefficient the tangential gradient of ``f``.
    """

    def __init__(self, f: SphereFunction, r0: float = 1.0, obstacle=None):
        super().__init__()
        self.gauge = TailGauge(f, r0)
        self.f = f
        self.r0 = float(r0)
        self.obstacle = obstacle
        self.tag = "SR" if f.is_constant() else "LRdelta"
        self.delta = 2.0
        self.zeta = 2.0

    def __call__(self, x):
        return self.gauge.grad(x)

    def a_inf_analytic(self, u):
        return self.f.tangential_grad(unit_rows(u))

    def lambda_inf_analytic(self, u):
        return self.f(unit_rows(u))

    def is_zero(self):
        return self.f.is_constant()


def make_longrange_potential(f: SphereFunction, r0: float = 1.0, obstacle=None):
    """(A, gauge) with ``A = grad(chi f)``; the gauge carries lambda_inf = f."""
    A = LongRangeTailPotential(f, r0, obstacle)
    return A, A.gauge


# --------------------------------------------------------------------------
# derived quantities
# --------------------------------------------------------------------------


def a_infinity(A: VectorPotential, v, tau0: float | None = None, tol: float = 1e-6, max_doublings: int = 20):
    """``lim tau A(tau v)`` by Richardson extrapolation on tau = tau0 * 2^k.

    Estimates are extrapolated in h = 1/tau (Neville table); iteration stops
    when two successive extrapolants agree to ``tol``.
    """
    v = unit(v)
    if tau0 is None:
        rk = A.obstacle.enclosing_radius() if A.obstacle is not None else 0.0
        tau0 = max(4.0, 2.0 * rk)
    hs, rows = [], []
    prev_best = None
    for k in range(max_doublings + 1):
        tau = tau0 * 2.0**k
        hs.append(1.0 / tau)
        rows.append([tau * A(tau * v)])
        # Neville: rows[i][j] extrapolates using points i-j..i
        i = len(rows) - 1
        for j in range(1, min(i, 3) + 1):
            h_new, h_old = hs[i], hs[i - j]
            rows[i].append(rows[i][j - 1] + (rows[i][j - 1] - rows[i - 1][j - 1]) * h_new / (h_old - h_new))
        best = rows[i][-1]
        if prev_best is not None and np.max(np.abs(best - prev_best)) < tol:
            radial = float(np.dot(best, v))
            if abs(radial) > 1e-5:
                raise DecayClassError(f"A_inf has radial component {radial:.3g}; potential is not in the LR class")
            return best
        prev_best = best
    raise NonConvergent(f"tau A(tau v) did not settle after {max_doublings} doublings")


def radial_component_bound(A: VectorPotential, r: float, n: int = 10_000, seed: int = 0, r_max_factor: float = 100.0):
    """Monte-Carlo estimate of ``sup_{|x| >= r} A(x) . x/|x|`` over r <= |x| <= 100 r."""
    if r <= 0:
        raise DomainError("radius must be positive")
    rng = np.random.default_rng(seed)
    u = unit_rows(rng.normal(size=(n, 3)))
    rad = r * np.exp(rng.uniform(0.0, np.log(r_max_factor), size=n))
    pts = u * rad[:, None]
    if A.obstacle is not None and A.obstacle.components:
        keep = A.obstacle.distance(pts) > A.obstacle.collar
        pts, u = pts[keep], u[keep]
    vals = np.sum(A(pts) * u, axis=-1)
    return float(max(np.max(vals), 0.0)) if len(vals) else 0.0


def curl_fd(A, x, h=1e-4):
    """Central-difference curl of a vector field at points (..., 3)."""
    x = np.asarray(x, float)
    J = np.empty(x.shape + (3,))
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        J[..., :, k] = (A(x + e) - A(x - e)) / (2 * h)  # J[..., i, k] = d A_i / d x_k
    return np.stack([J[..., 2, 1] - J[..., 1, 2], J[..., 0, 2] - J[..., 2, 0], J[..., 1, 0] - J[..., 0, 1]], axis=-1)


def divergence_fd(F, x, h=1e-4):
    x = np.asarray(x, float)
    out = 0.0
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        out = out + (F(x + e)[..., k] - F(x - e)[..., k]) / (2 * h)
    return out


def circulation(A, curve: ClosedCurve, n: int = 64) -> float:
    pts, dl = curve.quadrature(n)
    return float(np.sum(A(pts) * dl))


def hole_loop(torus: Torus, radius: float | None = None) -> ClosedCurve:
    """The torus hole loop as an exact circle, linking the core circle +1."""
    e1, _ = torus.plane_basis()
    if radius is None:
        radius = 0.5 * (torus.minor_radius + torus.major_radius)
    center = torus.c + torus.major_radius * e1
    w = torus.a
    probe = center + radius * (np.cos(np.linspace(0, 2 * np.pi, 64, endpoint=False))[:, None] * e1
                               + np.sin(np.linspace(0, 2 * np.pi, 64, endpoint=False))[:, None] * w)
    if linking_number(probe, torus.core_circle(128)) < 0:
        w = -w
    return ClosedCurve([ArcSegment(center, e1, w, float(radius), 0.0, 2 * np.pi)])


def decay_slope(f, r_lo: float, r_hi: float, n_dirs: int = 64, n_r: int = 12, seed: int = 0, slab: bool = False, obstacle=None):
    """Log-log slope of ``max_dirs |f(r u)|`` over r in [r_lo, r_hi]."""
    rng = np.random.default_rng(seed)
    u = rng.normal(size=(n_dirs, 3))
    if slab:
        u[:, 2] = 0.0
    u = unit_rows(u)
    rs = np.geomspace(r_lo, r_hi, n_r)
    pts = rs[:, None, None] * u[None]
    if obstacle is not None and obstacle.components:
        pass  # r_lo is chosen outside the obstacle by callers
    vals = np.asarray(f(pts))
    mags = np.linalg.norm(vals, axis=-1) if vals.ndim == 3 else np.abs(vals)
    m = np.max(mags, axis=1)
    if np.all(m == 0):
        return -np.inf
    m = np.maximum(m, 1e-300)
    slope = np.polyfit(np.log(rs), np.log(m), 1)[0]
    return float(slope)


def _segment_integral(F, a, b, tol=1e-12, n=32, max_level=12):
    """Line integral of F . dl along a -> b by composite Gauss-Legendre, refined."""
    g, w = np.polynomial.legendre.leggauss(n)
    d = b - a
    prev = None
    panels = 1
    for _ in range(max_level):
        t = ((np.arange(panels)[:, None] + 0.5 * (g[None] + 1.0)) / panels).ravel()
        wt = np.tile(0.5 * w / panels, panels)
        val = float(np.sum(wt * (F(a + t[:, None] * d) @ d)))
        if prev is not None and abs(val - prev) < tol * max(1.0, abs(val)):
            return val
        prev = val
        panels *= 2
    raise QuadratureNonConvergent("segment integral failed to converge")


@dataclass
class NumericGauge(GaugeFunction):
    """Gauge function obtained by path quadrature of ``A2 - A1``."""

    diff: object
    anchor: np.ndarray
    obstacle: Obstacle | None
    waypoints: np.ndarray = field(default=None)

    def _path(self, x, which=0):
        x = np.asarray(x, float)
        a = self.anchor
        if self._clear(a, x):
            return [a, x] if which == 0 else None
        for k in range(len(self.waypoints)):
            wp = self.waypoints[(k + which * 7) % len(self.waypoints)]
            if self._clear(a, wp) and self._clear(wp, x):
                return [a, wp, x]
        raise FluxMismatch("no obstacle-avoiding path found for gauge quadrature")

    def _clear(self, p, q):
        if self.obstacle is None or not self.obstacle.components:
            return True
        t = np.linspace(0.0, 1.0, 401)[:, None]
        return bool(np.min(self.obstacle.distance(p + t * (q - p))) > self.obstacle.collar)

    def _along(self, path):
        return sum(_segment_integral(self.diff, p, q) for p, q in zip(path[:-1], path[1:]))

    def value(self, x):
        x = np.asarray(x, float)
        if x.ndim > 1:
            return np.array([self.value(p) for p in x.reshape(-1, 3)]).reshape(x.shape[:-1])
        return self._along(self._path(x))

    def value_alt_path(self, x):
        """Same quantity along a different (homotopic) path, for consistency checks."""
        x = np.asarray(x, float)
        wp = self.waypoints[3 % len(self.waypoints)]
        path = [self.anchor, wp, x]
        if not (self._clear(self.anchor, wp) and self._clear(wp, x)):
            for w2 in self.waypoints:
                if self._clear(self.anchor, w2) and self._clear(w2, x):
                    path = [self.anchor, w2, x]
                    break
        return self._along(path)

    def grad(self, x):
        return self.diff(x)

    def lambda_inf(self, u):
        u = unit_rows(u)
        if u.ndim > 1:
            return np.array([self.lambda_inf(p) for p in u])
        rk = self.obstacle.enclosing_radius() if self.obstacle is not None else 0.0
        R1 = max(2.0 * rk, 1.0, np.linalg.norm(self.anchor))
        base = self.value(R1 * u)
        tail, err = integrate.quad(lambda s: float(self.diff(s * u) @ u), R1, np.inf, epsabs=1e-12, epsrel=1e-12, limit=200)
        return base + tail


def gauge_between(A1: VectorPotential, A2: VectorPotential, anchor=(0.0, 0.0, 0.0), obstacle: Obstacle | None = None,
                  check_point=None, flux_tol: float = 1e-8) -> NumericGauge:
    """Gauge function ``lambda`` with ``A2 = A1 + grad(lambda)`` and ``lambda(anchor) = 0``."""
    obstacle = obstacle if obstacle is not None else (A1.obstacle or A2.obstacle)
    diff = lambda x: A2(x) - A1(x)
    if obstacle is not None:
        for j, torus in enumerate(obstacle.tori):
            c = circulation(diff, hole_loop(torus), n=96)
            if abs(c) > flux_tol:
                raise FluxMismatch(f"circulations around hole {j} differ by {c:.3g}; lambda would be multivalued")
    rk = obstacle.enclosing_radius() if obstacle is not None else 1.0
    # waypoints on a sphere outside the obstacle (Fibonacci lattice)
    k = np.arange(24) + 0.5
    phi = np.arccos(1 - 2 * k / 24)
    th = np.pi * (1 + 5**0.5) * k
    wps = 1.5 * max(rk, 1.0) * np.stack([np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)], axis=1)
    g = NumericGauge(diff, np.asarray(anchor, float), obstacle, wps)
    if check_point is not None:
        a, b = g.value(check_point), g.value_alt_path(check_point)
        if abs(a - b) > 1e-7:
            raise FluxMismatch(f"gauge quadrature is path dependent ({abs(a - b):.3g})")
    return g
