"""Obstacles, lines, closed curves and the homology label of a line.

An obstacle is a finite union of balls and solid tori.  The homology class of
an admissible line ``x + R v`` is encoded by the vector of linking numbers of
its closure (the chord inside a large sphere closed by a sphere arc) with the
core circle of every torus.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import lsq_linear, minimize_scalar

from .errors import (
    ConvexHullViolation,
    InvalidObstacle,
    LineIntersectsObstacle,
    LinkingNotQuantized,
    RadiusTooSmall,
)
from .kernels import linking_number

# --------------------------------------------------------------------------
# small vector helpers
# --------------------------------------------------------------------------


def unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("zero vector has no direction")
    return v / n


def orthonormal_basis(v) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic pair (e1, e2) completing ``v`` to a right-handed frame."""
    v = unit(v)
    # axis least aligned with v
    k = int(np.argmin(np.abs(v)))
    a = np.zeros(3)
    a[k] = 1.0
    e1 = unit(a - np.dot(a, v) * v)
    e2 = np.cross(v, e1)
    return e1, e2


def rotate_towards(v, vperp, angle) -> np.ndarray:
    """``cos(angle) v + sin(angle) vperp``."""
    return np.cos(angle) * np.asarray(v, float) + np.sin(angle) * np.asarray(vperp, float)


# --------------------------------------------------------------------------
# solids
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.radius > 0:
            raise InvalidObstacle(f"ball radius must be positive, got {self.radius}")

    @property
    def c(self):
        return np.asarray(self.center)

    def distance(self, pts):
        """Signed distance from ``pts`` (..., 3) to the ball surface."""
        return np.linalg.norm(np.asarray(pts) - self.c, axis=-1) - self.radius

    def extent(self):
        return float(np.linalg.norm(self.c) + self.radius)


@dataclass(frozen=True)
class Torus:
    center: tuple
    axis: tuple
    major_radius: float
    minor_radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        ax = np.asarray(self.axis, dtype=float)
        if np.linalg.norm(ax) == 0:
            raise InvalidObstacle("torus axis must be nonzero")
        object.__setattr__(self, "axis", tuple(unit(ax)))
        if not (0 < self.minor_radius < self.major_radius):
            raise InvalidObstacle(
                f"torus needs 0 < r_min < R_maj, got r_min={self.minor_radius}, R_maj={self.major_radius}"
            )

    @property
    def c(self):
        return np.asarray(self.center)

    @property
    def a(self):
        return np.asarray(self.axis)

    def plane_basis(self):
        return orthonormal_basis(self.a)

    def distance(self, pts):
        d = np.asarray(pts) - self.c
        z = d @ self.a
        rho = np.linalg.norm(d - z[..., None] * self.a, axis=-1)
        return np.hypot(rho - self.major_radius, z) - self.minor_radius

    def extent(self):
        return float(np.linalg.norm(self.c) + self.major_radius + self.minor_radius)

    def core_circle(self, n=256):
        """Core circle polyline, counterclockwise about ``axis``."""
        e1, e2 = self.plane_basis()
        t = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
        return self.c + self.major_radius * (np.cos(t)[:, None] * e1 + np.sin(t)[:, None] * e2)

    def hole_circle(self, n=256, radius=None):
        """Meridian loop around the tube, oriented to link the core circle +1."""
        e1, _ = self.plane_basis()
        if radius is None:
            radius = 0.5 * (self.minor_radius + self.major_radius)
        t = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
        # circle in the (e1, axis) plane around the core point c + R e1;
        # orientation is fixed numerically so the convention cannot drift
        loop = self.c + self.major_radius * e1 + radius * (np.cos(t)[:, None] * e1 + np.sin(t)[:, None] * self.a)
        if linking_number(loop, self.core_circle(128)) < 0:
            loop = loop[::-1]
        return loop


Solid = Ball | Torus


def _circle_circle_gap(t1: Torus, t2: Torus, n=720):
    pts = t1.core_circle(n)
    # distance from points to core circle of t2
    d = pts - t2.c
    z = d @ t2.a
    rho = np.linalg.norm(d - z[:, None] * t2.a, axis=-1)
    return float(np.min(np.hypot(rho - t2.major_radius, z))) - t1.minor_radius - t2.minor_radius


def surface_gap(s1: Solid, s2: Solid) -> float:
    """Approximate minimum surface distance between two solids."""
    if isinstance(s1, Ball) and isinstance(s2, Ball):
        return float(np.linalg.norm(s1.c - s2.c) - s1.radius - s2.radius)
    if isinstance(s1, Ball):
        s1, s2 = s2, s1
    if isinstance(s2, Ball):
        return float(s1.distance(s2.c)) - s2.radius
    return min(_circle_circle_gap(s1, s2), _circle_circle_gap(s2, s1))


@dataclass(frozen=True)
class Obstacle:
    """Union of pairwise disjoint balls and solid tori.

    ``collar`` is the width of the smooth transition layer around the solids;
    by default half of the smallest gap between components.
    """

    components: tuple = ()
    collar: float | None = None

    def __post_init__(self):
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        gaps = []
        for i in range(len(comps)):
            for j in range(i + 1, len(comps)):
                g = surface_gap(comps[i], comps[j])
                if g <= 0:
                    raise InvalidObstacle(f"components {i} and {j} overlap (gap {g:.3g})")
                gaps.append(g)
        if self.collar is None:
            if gaps:
                col = 0.5 * min(gaps)
            elif comps:
                col = 0.25 * min(
                    c.minor_radius if isinstance(c, Torus) else c.radius for c in comps
                )
            else:
                col = 0.0
            object.__setattr__(self, "collar", float(col))

    @property
    def tori(self) -> list[Torus]:
        return [c for c in self.components if isinstance(c, Torus)]

    def handle_curves(self, n=256):
        return [t.core_circle(n) for t in self.tori]

    def dual_curves(self, n=256):
        return [t.hole_circle(n) for t in self.tori]

    def enclosing_radius(self) -> float:
        """Radius of the smallest origin-centred ball containing every solid."""
        if not self.components:
            return 0.0
        return max(c.extent() for c in self.components)

    def distance(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        if not self.components:
            return np.full(pts.shape[:-1], np.inf)
        return np.min(np.stack([c.distance(pts) for c in self.components]), axis=0)

    def line_distance(self, x, v) -> float:
        """Minimum distance from the full line ``x + R v`` to the obstacle."""
        if not self.components:
            return np.inf
        x = np.asarray(x, float)
        v = unit(v)
        best = np.inf
        for comp in self.components:
            if isinstance(comp, Ball):
                d = comp.c - x
                best = min(best, float(np.linalg.norm(d - np.dot(d, v) * v) - comp.radius))
                continue
            t0 = float(np.dot(comp.c - x, v))
            span = comp.major_radius + comp.minor_radius + 1.0
            ts = np.linspace(t0 - span, t0 + span, 801)
            ds = comp.distance(x + ts[:, None] * v)
            k = int(np.argmin(ds))
            lo, hi = ts[max(k - 1, 0)], ts[min(k + 1, len(ts) - 1)]
            res = minimize_scalar(
                lambda t: float(comp.distance(x + t * v)),
                bounds=(lo, hi),
                method="bounded",
                options={"xatol": 1e-12},
            )
            best = min(best, float(min(res.fun, ds[k])))
        return best


# --------------------------------------------------------------------------
# lines and curves
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LineQuery:
    x: tuple
    v: tuple
    label: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(c) for c in self.x))
        object.__setattr__(self, "v", tuple(unit(self.v)))

    @property
    def base(self):
        return np.asarray(self.x)

    @property
    def direction(self):
        return np.asarray(self.v)

    def with_label(self, label):
        return LineQuery(self.x, self.v, tuple(int(h) for h in label))


@dataclass(frozen=True)
class StraightSegment:
    start: np.ndarray
    end: np.ndarray

    def length(self):
        return float(np.linalg.norm(self.end - self.start))

    def point(self, t):
        t = np.asarray(t, float)[..., None]
        return self.start + t * (self.end - self.start)

    def tangent(self, t):
        t = np.asarray(t, float)[..., None]
        return np.broadcast_to(self.end - self.start, t.shape[:-1] + (3,))

    def endpoints(self):
        return self.start, self.end

    def transformed(self, f):
        return StraightSegment(f(self.start), f(self.end))

    def n_polyline(self, n):
        return 1


@dataclass(frozen=True)
class ArcSegment:
    """``center + radius (cos th u + sin th w)`` for th from theta0 to theta1."""

    center: np.ndarray
    u: np.ndarray
    w: np.ndarray
    radius: float
    theta0: float
    theta1: float

    def length(self):
        return abs(self.theta1 - self.theta0) * self.radius

    def point(self, t):
        th = self.theta0 + np.asarray(t, float) * (self.theta1 - self.theta0)
        return self.center + self.radius * (np.cos(th)[..., None] * self.u + np.sin(th)[..., None] * self.w)

    def tangent(self, t):
        dth = self.theta1 - self.theta0
        th = self.theta0 + np.asarray(t, float) * dth
        return self.radius * dth * (-np.sin(th)[..., None] * self.u + np.cos(th)[..., None] * self.w)

    def endpoints(self):
        return self.point(0.0), self.point(1.0)

    def transformed(self, f, scale=1.0):
        return ArcSegment(f(self.center), self.u, self.w, self.radius * scale, self.theta0, self.theta1)

    def n_polyline(self, n):
        return max(2, int(np.ceil(n * abs(self.theta1 - self.theta0) / (2 * np.pi))))


@dataclass
class ClosedCurve:
    """Ordered chain of oriented straight and circular segments."""

    segments: list
    resolution: int = 512
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        err = self.closure_error()
        if err > 1e-12 * max(1.0, self.scale()):
            raise ValueError(f"segments do not chain into a closed loop (gap {err:.3g})")

    def scale(self):
        pts = np.array([p for s in self.segments for p in s.endpoints()])
        return float(np.max(np.linalg.norm(pts, axis=1))) if len(pts) else 1.0

    def closure_error(self):
        gaps = []
        for a, b in zip(self.segments, self.segments[1:] + self.segments[:1]):
            gaps.append(np.linalg.norm(a.endpoints()[1] - b.endpoints()[0]))
        return float(max(gaps)) if gaps else 0.0

    def length(self):
        return float(sum(s.length() for s in self.segments))

    def polyline(self, n=None):
        """Closed polyline (first point not repeated) with ~n points per 2 pi of arc."""
        n = self.resolution if n is None else n
        pts = []
        for s in self.segments:
            k = s.n_polyline(n)
            t = np.arange(k) / k
            pts.append(s.point(t))
        return np.vstack(pts)

    def dilated(self, s, about):
        """Image under ``y -> about + s (y - about)``."""
        about = np.asarray(about, float)
        f = lambda y: about + s * (np.asarray(y) - about)
        segs = []
        for seg in self.segments:
            segs.append(seg.transformed(f, s) if isinstance(seg, ArcSegment) else seg.transformed(f))
        return ClosedCurve(segs, self.resolution, dict(self.meta))

    def quadrature(self, n=64):
        """Gauss-Legendre nodes and oriented length elements ``dl`` per node."""
        g, wg = np.polynomial.legendre.leggauss(n)
        t = 0.5 * (g + 1.0)
        wt = 0.5 * wg
        pts, dls = [], []
        for seg in self.segments:
            panels = 1 if isinstance(seg, StraightSegment) else max(1, int(np.ceil(abs(seg.theta1 - seg.theta0) / (np.pi / 4))))
            for p in range(panels):
                tp = (p + t) / panels
                pts.append(seg.point(tp))
                dls.append(seg.tangent(tp) * (wt / panels)[:, None])
        return np.vstack(pts), np.vstack(dls)


def _chord(x, v, R):
    """Entry/exit points of the line with the sphere |y| = R (None if missed)."""
    x = np.asarray(x, float)
    b = float(np.dot(x, v))
    c = float(np.dot(x, x) - R * R)
    disc = b * b - c
    if disc <= 0:
        return None
    r = np.sqrt(disc)
    return x + (-b - r) * v, x + (-b + r) * v


def closure_curve(obstacle: Obstacle, line: LineQuery, R: float, arc_choice: int = 0) -> ClosedCurve:
    """Chord of the line inside ``B(0; R)`` (oriented along v) closed by a sphere arc.

    The arc lies in the plane through the origin and the two chord endpoints;
    ``arc_choice`` 0 takes the shorter of the two arcs, 1 the longer.  A chord
    through the origin leaves the plane undetermined; it is then tilted by
    1e-9 towards a fixed axis so the result is deterministic.
    """
    if obstacle.components and obstacle.enclosing_radius() >= R:
        raise RadiusTooSmall(f"obstacle extends to radius {obstacle.enclosing_radius():.6g} >= R={R}")
    v = line.direction
    ends = _chord(line.base, v, R)
    if ends is None:
        raise ValueError("line does not meet the sphere of radius R")
    p_in, p_out = ends
    n = np.cross(p_out, p_in)
    if np.linalg.norm(n) < 1e-9 * R * R:
        e1, _ = orthonormal_basis(v)
        n = np.cross(p_out, p_in + 1e-9 * R * e1)
        if np.linalg.norm(n) < 1e-300:
            n = np.cross(v, e1)
    n = unit(n)
    u = p_out / R
    w = np.cross(n, u)
    # p_in = R (cos a u + sin a w) with a in (0, pi]
    a = float(np.arctan2(np.dot(p_in, w), np.dot(p_in, u)))
    if a < 0:
        a += 2 * np.pi
    theta1 = a if arc_choice == 0 else a - 2 * np.pi
    if arc_choice not in (0, 1):
        raise ValueError("arc_choice must be 0 or 1")
    chord = StraightSegment(p_in, p_out)
    arc = ArcSegment(np.zeros(3), u, w, float(R), 0.0, theta1)
    # snap the arc end onto the chord start exactly
    return ClosedCurve([chord, arc], meta={"R": R, "arc_choice": arc_choice, "x": line.base, "v": v})


def default_closure_radius(obstacle: Obstacle, line: LineQuery) -> float:
    x = line.base
    v = line.direction
    foot = np.linalg.norm(x - np.dot(x, v) * v)
    return max(1.5 * obstacle.enclosing_radius(), foot + 1.0, 1.0)


def classify_line(
    obstacle: Obstacle,
    line: LineQuery,
    R: float | None = None,
    arc_choice: int = 0,
    n0: int = 256,
    n_max: int = 8192,
    tol: float = 1e-3,
) -> tuple:
    """Per-torus linking numbers of the line's closure with the core circles.

    The polygonal linking sum is refined (doubling the sampling) until two
    successive resolutions give the same integer to within ``tol``.
    """
    if obstacle.line_distance(line.base, line.direction) <= 0:
        raise LineIntersectsObstacle(f"line through {line.x} along {line.v} meets the obstacle")
    tori = obstacle.tori
    if not tori:
        return ()
    R = default_closure_radius(obstacle, line) if R is None else R
    curve = closure_curve(obstacle, line, R, arc_choice)
    labels = []
    for torus in tori:
        n = n0
        prev = None
        while True:
            val = linking_number(curve.polyline(n), torus.core_circle(n))
            k = round(val)
            settled = abs(val - k) < tol
            if settled and prev is not None and prev == k:
                labels.append(int(k))
                break
            prev = k if settled else None
            n *= 2
            if n > n_max:
                raise LinkingNotQuantized(f"linking sum {val:.6g} not within {tol} of an integer")
    return tuple(labels)


def _hull_distance(p, d1, q, d2):
    """Distance from the origin to conv((p + R+ d1) u (q + R+ d2))."""
    M = np.column_stack([p - q, d1, d2])
    res = lsq_linear(M, -q, bounds=([0.0, 0.0, 0.0], [1.0, np.inf, np.inf]), method="bvls")
    z = M @ res.x + q
    return float(np.linalg.norm(z))


def gamma_curve(x, v, y, w, rho, obstacle: Obstacle | None = None, r: float | None = None) -> ClosedCurve:
    """Quadrilateral loop through the segments ``x + [-rho, rho] v`` and ``y + [-rho, rho] w``.

    Sides: x-rho v -> x+rho v (along v), x+rho v -> y+rho w,
    y+rho w -> y-rho w (along -w), y-rho w -> x-rho v.  Both convex hulls of
    the outgoing and incoming ray pairs must stay outside ``B(0; r)``.
    """
    x, y = np.asarray(x, float), np.asarray(y, float)
    v, w = unit(v), unit(w)
    if r is None:
        r = obstacle.enclosing_radius() if obstacle is not None else 0.0
    if r > 0:
        d_minus = _hull_distance(x - rho * v, -v, y - rho * w, -w)
        d_plus = _hull_distance(x + rho * v, v, y + rho * w, w)
        if min(d_minus, d_plus) <= r:
            raise ConvexHullViolation(
                f"ray hull comes within {min(d_minus, d_plus):.4g} of the origin (r={r})"
            )
    pts = [x - rho * v, x + rho * v, y + rho * w, y - rho * w]
    segs = [StraightSegment(pts[i], pts[(i + 1) % 4]) for i in range(4)]
    return ClosedCurve(segs, meta={"rho": rho})


def curve_linking(curve: ClosedCurve, obstacle: Obstacle, n: int = 1024) -> tuple:
    """Linking vector of an arbitrary closed curve with the torus core circles."""
    out = []
    for torus in obstacle.tori:
        val = linking_number(curve.polyline(n), torus.core_circle(n))
        out.append(val)
    return tuple(out)


def lambda_rec_check(obstacle: Obstacle, y, normal, collar: float | None = None) -> bool:
    """True iff the plane through ``y`` with the given normal misses the collared obstacle."""
    if not obstacle.components:
        return True
    y = np.asarray(y, float)
    n = unit(normal)
    collar = obstacle.collar if collar is None else collar
    for comp in obstacle.components:
        if isinstance(comp, Ball):
            gap = abs(float(np.dot(n, comp.c - y))) - comp.radius
        else:
            e1, e2 = comp.plane_basis()
            h = float(np.dot(n, comp.c - y))
            amp = comp.major_radius * np.hypot(np.dot(n, e1), np.dot(n, e2))
            core_gap = 0.0 if abs(h) <= amp else abs(h) - amp
            gap = core_gap - comp.minor_radius
        if gap <= collar:
            return False
    return True
