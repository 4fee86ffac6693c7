"""Line, arc and loop integrals of the potentials.

X-ray transforms of A and A0, long-range fluxes (arc limits), hole fluxes
(closed-curve circulations) and angular derivatives of line integrals.
Everything is returned unreduced; reduction modulo pi or 2 pi belongs to the
inversion step.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import ClassCrossing, FluxMismatch, NonConvergent, NoRepresentative, SlowDecay
from .geometry import (
    ArcSegment,
    ClosedCurve,
    LineQuery,
    Obstacle,
    classify_line,
    closure_curve,
    orthonormal_basis,
    rotate_towards,
    unit,
)
from .potentials import ZeroElectric, ZeroPotential, a_infinity


@dataclass(frozen=True)
class XRaySample:
    line: LineQuery
    int_A: float
    int_A0: float
    err: float


@dataclass(frozen=True)
class FluxRecord:
    h: tuple
    F_h: float
    Phi_L: float
    v: tuple


@dataclass(frozen=True)
class AngularDerivative:
    value: float  # Richardson-improved
    central: float  # plain central difference at dtheta
    dtheta: float


def _line_scale(x, v, obstacle):
    foot = x - np.dot(x, v) * v
    rk = obstacle.enclosing_radius() if obstacle is not None else 0.0
    return max(1.0, float(np.linalg.norm(foot)), rk)


def _check_decay(A, x, v, scale):
    rs = scale * np.array([1e4, 1e6])
    vals = []
    for sgn in (1.0, -1.0):
        pts = x + sgn * rs[:, None] * v
        vals.append(np.abs(A(pts) @ v) * rs)
    vals = np.max(np.array(vals), axis=0)
    if vals[0] > 1e-8 and vals[1] > 0.1 * vals[0]:
        raise SlowDecay(f"A.v decays no faster than 1/r along the line (r|A.v| ~ {vals[1]:.3g})")


def xray(A, A0, line: LineQuery, tol: float = 1e-10, obstacle: Obstacle | None = None) -> XRaySample:
    """Integrals of ``A . v`` and ``A0`` over the full line, adaptively.

    The line parameter is mapped by ``r = r_c + c tan(u)``, so the infinite
    tails are integrated, not truncated; potentials in the admissible classes
    (|A . v| = O(r^-2) along lines) give a bounded integrand.
    """
    A = ZeroPotential() if A is None else A
    A0 = ZeroElectric() if A0 is None else A0
    x = line.base
    v = line.direction
    obstacle = obstacle if obstacle is not None else getattr(A, "obstacle", None)
    c = _line_scale(x, v, obstacle)
    rc = -float(np.dot(x, v))
    _check_decay(A, x, v, c)

    def f(u):
        t = np.tan(u)
        p = x + (rc + c * t) * v
        jac = c * (1.0 + t * t)
        return np.array([float(A(p) @ v) * jac, float(A0(p)) * jac])

    half = 0.5 * np.pi
    val, err = integrate.quad_vec(f, -half, half, epsabs=tol, epsrel=0.0, norm="max", limit=4000)
    if err > tol:
        raise NonConvergent(f"line quadrature error estimate {err:.3g} exceeds tol {tol:.3g}")
    return XRaySample(line, float(val[0]), float(val[1]), float(err))


def xray_batch(A, A0, bases, dirs, tol: float = 1e-10, scale: float = 1.0, max_panels: int = 1024, chunk: int = 256):
    """Vectorised X-ray transform for many lines at once.

    Composite Gauss-Legendre in the tan-mapped parameter; the panel count
    doubles until two successive results agree to ``tol`` for every line.
    Returns (int_A, int_A0, err) arrays.
    """
    A = ZeroPotential() if A is None else A
    A0 = ZeroElectric() if A0 is None else A0
    bases = np.atleast_2d(np.asarray(bases, float))
    dirs = np.atleast_2d(np.asarray(dirs, float))
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    dirs = np.broadcast_to(dirs, bases.shape)
    n = bases.shape[0]
    out_A = np.empty(n)
    out_A0 = np.empty(n)
    out_err = np.empty(n)
    g, w = np.polynomial.legendre.leggauss(16)
    zero_A = A.is_zero() if hasattr(A, "is_zero") else False
    zero_A0 = A0.is_zero() if hasattr(A0, "is_zero") else False

    def rule(panels):
        edges = np.linspace(-0.5 * np.pi, 0.5 * np.pi, panels + 1)
        mid = 0.5 * (edges[:-1] + edges[1:])
        hw = 0.5 * (edges[1] - edges[0])
        u = (mid[:, None] + hw * g[None]).ravel()
        wu = np.tile(hw * w, panels)
        t = np.tan(u)
        return t, wu * scale * (1.0 + t * t)

    for s in range(0, n, chunk):
        xb = bases[s:s + chunk]
        vb = dirs[s:s + chunk]
        rc = -np.sum(xb * vb, axis=1)
        prev = None
        panels = 8
        while True:
            t, wt = rule(panels)
            p = xb[:, None, :] + (rc[:, None] + scale * t[None, :])[..., None] * vb[:, None, :]
            ia = np.zeros(len(xb))
            if not zero_A:
                ia = np.einsum("lkj,lj,k->l", A(p), vb, wt)
            i0 = np.zeros(len(xb)) if zero_A0 else A0(p) @ wt
            cur = np.stack([ia, i0])
            if prev is not None:
                diff = np.max(np.abs(cur - prev), axis=0)
                if np.all(diff < tol) or panels >= max_panels:
                    break
            prev = cur
            panels *= 2
        out_A[s:s + chunk] = cur[0]
        out_A0[s:s + chunk] = cur[1]
        out_err[s:s + chunk] = diff
    if np.any(out_err > tol):
        raise NonConvergent(f"batch line quadrature reached {max_panels} panels with error {np.max(out_err):.3g}")
    return out_A, out_A0, out_err


# --------------------------------------------------------------------------
# curve integrals
# --------------------------------------------------------------------------


def segment_integral(A, seg, tol: float = 1e-11, n: int = 24, max_level: int = 14) -> float:
    """Integral of A . dl along one straight or circular segment (panel doubling)."""
    g, w = np.polynomial.legendre.leggauss(n)
    panels = 1 if not isinstance(seg, ArcSegment) else max(1, int(np.ceil(abs(seg.theta1 - seg.theta0) / (np.pi / 4))))
    prev = None
    for _ in range(max_level):
        t = ((np.arange(panels)[:, None] + 0.5 * (g[None] + 1.0)) / panels).ravel()
        wt = np.tile(0.5 * w / panels, panels)
        val = float(np.sum(np.sum(A(seg.point(t)) * seg.tangent(t), axis=-1) * wt))
        if prev is not None and abs(val - prev) < tol * max(1.0, abs(val)):
            return val
        prev = val
        panels *= 2
    raise NonConvergent("curve quadrature did not converge")


def curve_integral(A, curve: ClosedCurve, tol: float = 1e-11) -> float:
    return float(sum(segment_integral(A, s, tol) for s in curve.segments))


# --------------------------------------------------------------------------
# long-range flux
# --------------------------------------------------------------------------


def _neville(hs, vals):
    """Extrapolate vals(h) to h = 0 with the full Neville table; returns the
    diagonal (successive extrapolants)."""
    table = [np.asarray(v, float) for v in vals]
    diag = [table[0]]
    n = len(hs)
    P = list(table)
    for j in range(1, n):
        P = [P[i + 1] + (P[i + 1] - P[i]) * hs[i + j] / (hs[i] - hs[i + j]) for i in range(n - j)]
        diag.append(P[-1])
    return diag


def base_point_far(v, obstacle: Obstacle | None, vperp=None, margin: float = 1.0):
    """A base point ``R vperp`` with ``K`` inside ``B(0; R)``."""
    e1, _ = orthonormal_basis(v)
    vperp = e1 if vperp is None else unit(vperp)
    rk = obstacle.enclosing_radius() if obstacle is not None else 0.0
    return (rk + margin) * vperp


def arc_integrals(A, v, s_schedule, x=None, obstacle: Obstacle | None = None, arc_choice: int = 0):
    """``int A`` over the dilated closing arcs for each dilation factor."""
    v = unit(v)
    obstacle = obstacle if obstacle is not None else getattr(A, "obstacle", None)
    x = base_point_far(v, obstacle) if x is None else np.asarray(x, float)
    R = float(np.linalg.norm(x)) + 1.0
    curve = closure_curve(obstacle or Obstacle(), LineQuery(x, v), R, arc_choice)
    vals = []
    for s in s_schedule:
        arc = curve.dilated(s, x).segments[1]
        vals.append(segment_integral(A, arc, tol=1e-13))
    return np.array(vals), x


def long_range_flux(A, v, s_schedule=(8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0), x=None, obstacle=None,
                    arc_choice: int = 0, tol: float = 1e-6, check_ainf: bool = True) -> float:
    """``-lim_{s->inf}`` of the arc integral, Richardson-extrapolated in 1/s.

    For potentials with a known or computable ``A_inf`` the result is checked
    against the half-circle ``A_inf`` integral (agreement to 1e-4).
    """
    s_schedule = np.sort(np.asarray(s_schedule, float))
    if len(s_schedule) < 3:
        raise ValueError("need at least three dilation factors")
    vals, x = arc_integrals(A, v, s_schedule, x, obstacle, arc_choice)
    diag = _neville(list(1.0 / s_schedule), list(vals))
    if abs(diag[-1] - diag[-2]) > tol * max(1.0, abs(diag[-1])):
        raise NonConvergent(f"arc-limit extrapolation stalled (last change {abs(diag[-1] - diag[-2]):.3g})")
    phi = -float(diag[-1])
    if check_ainf and getattr(A, "tag", "SR") == "LRdelta":
        alt = long_range_flux_from_ainf(A, v)
        if abs(alt - phi) > 1e-4:
            raise NonConvergent(f"arc limit {phi:.8g} and A_inf half-circle integral {alt:.8g} disagree")
    return phi


def _ainf(A, u, use_analytic=True):
    if use_analytic:
        val = A.a_inf_analytic(np.atleast_2d(u))
        if val is not None:
            return val
    return np.array([a_infinity(A, p) for p in np.atleast_2d(u)])


def long_range_flux_from_ainf(A, v, vperp=None, n: int = 64, use_analytic: bool = True) -> float:
    """``-int_0^pi A_inf(cos t v + sin t vperp) . (-sin t v + cos t vperp) dt``."""
    v = unit(v)
    vperp = orthonormal_basis(v)[0] if vperp is None else unit(vperp)
    g, w = np.polynomial.legendre.leggauss(n)
    th = 0.5 * np.pi * (g + 1.0)
    wt = 0.5 * np.pi * w
    pts = np.cos(th)[:, None] * v + np.sin(th)[:, None] * vperp
    tang = -np.sin(th)[:, None] * v + np.cos(th)[:, None] * vperp
    ainf = _ainf(A, pts, use_analytic)
    return -float(np.sum(wt * np.sum(ainf * tang, axis=1)))


# --------------------------------------------------------------------------
# hole fluxes
# --------------------------------------------------------------------------


def find_representatives(obstacle: Obstacle, v, h, n_reps: int = 3, seed: int = 0, grid: int = 41):
    """Base points (in the plane through 0 orthogonal to v) of lines in class h."""
    v = unit(v)
    h = tuple(int(k) for k in h)
    e1, e2 = orthonormal_basis(v)
    rk = obstacle.enclosing_radius()
    span = rk + 1.0
    s = np.linspace(-span, span, grid)
    cands = [a * e1 + b * e2 for a in s for b in s]
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(cands))
    found = []
    for k in order:
        x = cands[k]
        if obstacle.line_distance(x, v) <= obstacle.collar:
            continue
        if classify_line(obstacle, LineQuery(x, v)) == h:
            found.append(x)
            if len(found) == n_reps:
                break
    if not found:
        raise NoRepresentative(f"no admissible line of class {h} for direction {tuple(v)}")
    return found


def closure_circulation(A, obstacle: Obstacle, x, v, R=None, arc_choice: int = 0, tol: float = 1e-11) -> float:
    rk = obstacle.enclosing_radius()
    x = np.asarray(x, float)
    R = float(np.linalg.norm(x)) + max(rk, 1.0) if R is None else R
    curve = closure_curve(obstacle, LineQuery(x, v), R, arc_choice)
    return curve_integral(A, curve, tol)


def hole_flux(A, obstacle: Obstacle, h, v, n_reps: int = 3, seed: int = 0, spread_tol: float = 1e-6) -> float:
    """Circulation of A over the closure of a class-h line (independent of the representative)."""
    reps = find_representatives(obstacle, v, h, n_reps, seed)
    vals = [closure_circulation(A, obstacle, x, v) for x in reps]
    if max(vals) - min(vals) > spread_tol:
        raise FluxMismatch(f"hole flux depends on the representative line (spread {max(vals) - min(vals):.3g}); field present?")
    return float(np.mean(vals))


def flux_record(A, obstacle: Obstacle, h, v) -> FluxRecord:
    return FluxRecord(tuple(h), hole_flux(A, obstacle, h, v), long_range_flux(A, v, obstacle=obstacle), tuple(unit(v)))


# --------------------------------------------------------------------------
# angular derivatives
# --------------------------------------------------------------------------


def angular_derivative_xray(A, x, v, vperp, dtheta: float = 1e-3, which: str = "A", A0=None,
                            obstacle: Obstacle | None = None, tol: float = 1e-12) -> AngularDerivative:
    """d/dtheta of the line integral over ``L(x, cos t v + sin t vperp)`` at t = 0.

    Central differences at dtheta and dtheta/2 combined by one Richardson step.
    """
    x = np.asarray(x, float)
    v = unit(v)
    vperp = unit(np.asarray(vperp, float) - np.dot(vperp, v) * v)
    obstacle = obstacle if obstacle is not None else getattr(A, "obstacle", None)
    if obstacle is not None and obstacle.tori:
        labels = {classify_line(obstacle, LineQuery(x, rotate_towards(v, vperp, t))) for t in (-dtheta, 0.0, dtheta)}
        if len(labels) > 1:
            raise ClassCrossing(f"rotated lines change homology class: {sorted(labels)}")

    def I(t):
        s = xray(A if which == "A" else None, A0 if which == "A0" else None,
                 LineQuery(x, rotate_towards(v, vperp, t)), tol=tol, obstacle=obstacle)
        return s.int_A if which == "A" else s.int_A0

    d1 = (I(dtheta) - I(-dtheta)) / (2 * dtheta)
    d2 = (I(0.5 * dtheta) - I(-0.5 * dtheta)) / dtheta
    return AngularDerivative((4.0 * d2 - d1) / 3.0, d1, dtheta)


def field_moment(B, x, v, vperp, tol: float = 1e-12) -> float:
    """``int tau B(x + tau v) . (vperp x v) d tau`` by direct quadrature."""
    x = np.asarray(x, float)
    v = unit(v)
    n = np.cross(vperp, v)
    val, err = integrate.quad(lambda t: t * float(B(x + t * v) @ n), -np.inf, np.inf, epsabs=tol, epsrel=1e-12, limit=400)
    return float(val)
