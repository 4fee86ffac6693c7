"""Reconstruction from high-momentum phase data.

Data are phase pairs per line (as produced by ``hm_scattering``), possibly
known only modulo 2 pi.  From them:

* ``decouple`` separates the X-ray transforms of A and A0;
* ``reconstruct_A0`` inverts the planar X-ray transform of A0 by filtered
  backprojection;
* ``reconstruct_B`` recovers the plane-normal component of B on a plane tile:
  the difference of the angular derivatives of ``int A`` taken about two
  pivots on the same line equals (pivot separation) x (X-ray transform of
  B . n), the long-range ``A_inf`` term cancelling; FBP does the rest;
* ``recover_flux_mod``, ``recover_Phi_L`` and ``recover_Ainf_sum`` extract the
  gauge-invariant topological and long-range quantities.

``A_inf(v)`` on its own is not determined by the data; asking for it raises
:class:`NotDetermined`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BCorrectionNonConvergent,
    InsufficientAngles,
    ModeMismatch,
    MomentInversionIllposed,
    NotDetermined,
    PlaneBlocked,
    UnwrapAmbiguity,
)
from .geometry import LineQuery, Obstacle, lambda_rec_check, orthonormal_basis, rotate_towards, unit
from .hm_scattering import PhasePair
from .kernels import backproject
from .lineflux import xray_batch

TWO_PI = 2.0 * np.pi

# --------------------------------------------------------------------------
# data containers
# --------------------------------------------------------------------------


@dataclass
class PhaseDataset:
    """Phase pairs on the lines ``origin + s1 e1 + s2 e2 + R nu``.

    ``sisters`` maps ``(t, dtheta)`` to ``(theta_plus, theta_minus)`` arrays for the
    lines through the pivot ``base + t nu`` with direction rotated by ``dtheta``
    towards ``e1``.
    """

    nu: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    theta_plus: np.ndarray
    theta_minus: np.ndarray
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    labels: np.ndarray | None = None
    wrapped: bool = False
    sisters: dict = field(default_factory=dict)

    def __post_init__(self):
        self.nu = unit(self.nu)
        self.e1 = unit(self.e1)
        self.e2 = unit(self.e2)
        self.s1 = np.atleast_1d(np.asarray(self.s1, float))
        self.s2 = np.atleast_1d(np.asarray(self.s2, float))
        self.origin = np.asarray(self.origin, float)
        shape = (len(self.s1), len(self.s2))
        self.theta_plus = np.asarray(self.theta_plus, float).reshape(shape)
        self.theta_minus = np.asarray(self.theta_minus, float).reshape(shape)
        for s in (self.s1, self.s2):
            if len(s) > 2 and np.ptp(np.diff(s)) > 1e-9 * max(1.0, np.ptp(s)):
                raise ValueError("transverse grid spacing must be uniform")

    @property
    def shape(self):
        return self.theta_plus.shape

    def bases(self):
        S1, S2 = np.meshgrid(self.s1, self.s2, indexing="ij")
        return self.origin + S1[..., None] * self.e1 + S2[..., None] * self.e2


@dataclass
class ReconstructionGrid:
    """Scalar samples on ``center + u a + w b`` for u in us, w in ws (values[iw, iu])."""

    center: np.ndarray
    a: np.ndarray
    b: np.ndarray
    us: np.ndarray
    ws: np.ndarray
    values: np.ndarray
    truth: np.ndarray | None = None
    label: str = ""
    point_value: float | None = None  # reconstruction exactly at ``center``

    def points(self):
        U, W = np.meshgrid(self.us, self.ws)
        return self.center + U[..., None] * self.a + W[..., None] * self.b

    @property
    def center_value(self):
        if self.point_value is not None:
            return self.point_value
        iu = int(np.argmin(np.abs(self.us)))
        iw = int(np.argmin(np.abs(self.ws)))
        return float(self.values[iw, iu])

    def rel_l2_error(self):
        if self.truth is None:
            return None
        den = np.linalg.norm(self.truth)
        return float(np.linalg.norm(self.values - self.truth) / den) if den > 0 else float(np.linalg.norm(self.values))

    def max_abs_error(self):
        return None if self.truth is None else float(np.max(np.abs(self.values - self.truth)))


# --------------------------------------------------------------------------
# unwrapping and decoupling
# --------------------------------------------------------------------------


def wrap(theta, modulus=TWO_PI):
    """Reduce into ``[0, modulus)``."""
    r = np.mod(theta, modulus)
    return np.where(r >= modulus, 0.0, r) if np.ndim(r) else (0.0 if r >= modulus else r)


def wrap_centered(theta, modulus=TWO_PI):
    """Reduce into ``(-modulus/2, modulus/2]``."""
    return modulus / 2 - np.mod(modulus / 2 - np.asarray(theta), modulus)


def _unwrap_1d(vals, seed, modulus):
    out = np.array(vals, float)
    n = len(out)
    for direction in (1, -1):
        idx = range(seed + direction, n) if direction == 1 else range(seed - 1, -1, -1)
        for k in idx:
            prev = out[k - direction]
            if np.isnan(out[k]) or np.isnan(prev):
                continue
            j = k - 2 * direction
            # extrapolate only from samples already on the continued branch
            prev2 = out[j] if 0 <= j < n and (j - seed) * direction >= 0 else np.nan
            pred = 2 * prev - prev2 if not np.isnan(prev2) else prev
            cand = out[k] + modulus * np.round((pred - out[k]) / modulus)
            if abs(cand - prev) > modulus / 2:
                raise UnwrapAmbiguity(
                    f"adjacent phases differ by {abs(cand - prev):.3g} > {modulus / 2:.3g}; transverse grid too coarse"
                )
            out[k] = cand
    return out


def unwrap_grid(theta, seed=None, modulus=TWO_PI):
    """Continuous branch of wrapped phases on a 1D/2D grid.

    Continuation is along the seed row, then along every column, each time
    choosing the branch nearest to a linear extrapolation.  The seed (default:
    the grid centre) keeps its principal value in ``(-pi, pi]``.
    """
    th = np.array(theta, float)
    squeeze = th.ndim == 1
    if squeeze:
        th = th[:, None]
    n1, n2 = th.shape
    if seed is None:
        seed = (n1 // 2, n2 // 2)
    i0, j0 = seed
    th[i0, j0] = wrap_centered(th[i0, j0], modulus)
    th[:, j0] = _unwrap_1d(th[:, j0], i0, modulus)
    for i in range(n1):
        th[i, :] = _unwrap_1d(th[i, :], j0, modulus)
    return th[:, 0] if squeeze else th


def decouple(ds: PhaseDataset, seed=None):
    """``(int A . nu, int A0)`` grids: ``((t+ - t-)/2, -(t+ + t-)/2)``."""
    tp, tm = ds.theta_plus, ds.theta_minus
    if ds.wrapped:
        tp = unwrap_grid(tp, seed)
        tm = unwrap_grid(tm, seed)
    return 0.5 * (tp - tm), -0.5 * (tp + tm)


# --------------------------------------------------------------------------
# data acquisition (forward model)
# --------------------------------------------------------------------------


class SceneOracle:
    """High-momentum phase data of a scene: line -> PhasePair."""

    def __init__(self, A, A0=None, tol: float = 1e-10, scale: float = 1.0):
        self.A = A
        self.A0 = A0
        self.tol = tol
        self.scale = scale

    def batch(self, bases, dirs):
        ia, i0, _ = xray_batch(self.A, self.A0, bases, dirs, tol=self.tol, scale=self.scale)
        return ia - i0, -ia - i0

    def __call__(self, line: LineQuery) -> PhasePair:
        tp, tm = self.batch(line.base[None], line.direction[None])
        return PhasePair(float(tp[0]), float(tm[0]), line)


def acquire_dataset(oracle: SceneOracle, nu, s1, s2, origin=(0.0, 0.0, 0.0), e1=None, e2=None,
                    obstacle: Obstacle | None = None, classify: bool = False, wrapped: bool = False) -> PhaseDataset:
    """Phase data on a transverse grid; lines within the obstacle collar get NaN."""
    from .geometry import classify_line

    nu = unit(nu)
    if e1 is None:
        e1, e2 = orthonormal_basis(nu)
    ds = PhaseDataset(nu, e1, e2, s1, s2, np.zeros((len(np.atleast_1d(s1)), len(np.atleast_1d(s2)))),
                      np.zeros((len(np.atleast_1d(s1)), len(np.atleast_1d(s2)))), origin, wrapped=wrapped)
    base = ds.bases().reshape(-1, 3)
    ok = np.ones(len(base), bool)
    labels = None
    if obstacle is not None and obstacle.components:
        ok = np.array([obstacle.line_distance(b, nu) > obstacle.collar for b in base])
        if classify and obstacle.tori:
            labels = np.zeros((len(base), len(obstacle.tori)), dtype=np.int64)
            for i in np.flatnonzero(ok):
                labels[i] = classify_line(obstacle, LineQuery(base[i], nu))
    tp = np.full(len(base), np.nan)
    tm = np.full(len(base), np.nan)
    if ok.any():
        tp[ok], tm[ok] = oracle.batch(base[ok], nu)
    if wrapped:
        tp, tm = wrap(tp), wrap(tm)
    ds.theta_plus = tp.reshape(ds.shape)
    ds.theta_minus = tm.reshape(ds.shape)
    if labels is not None:
        ds.labels = labels.reshape(ds.shape + (-1,))
    return ds


def planar_directions(a, b, n_ang):
    """Angles, in-plane directions ``cos a + sin b`` and normals ``-sin a + cos b``."""
    phis = np.pi * np.arange(n_ang) / n_ang
    nus = np.cos(phis)[:, None] * a + np.sin(phis)[:, None] * b
    ns = -np.sin(phis)[:, None] * a + np.cos(phis)[:, None] * b
    return phis, nus, ns


def acquire_planar(oracle: SceneOracle, y, a, b, n_ang: int = 64, n_off: int = 128, half_width: float = 4.0,
                   sisters: bool = False, dtheta: float = 1e-3, pivots=(-1.0, 1.0),
                   obstacle: Obstacle | None = None) -> list[PhaseDataset]:
    """Parallel-beam data over ``n_ang`` in-plane directions (one dataset per angle).

    With ``sisters`` the lines through two pivots on every line, rotated within
    the plane by +-dtheta and +-dtheta/2, are acquired as well.
    """
    y = np.asarray(y, float)
    a, b = unit(a), unit(b)
    normal = unit(np.cross(a, b))
    if obstacle is not None and obstacle.components and not lambda_rec_check(obstacle, y, normal):
        raise PlaneBlocked("the obstacle collar meets the reconstruction plane")
    ds_off = 2.0 * half_width / n_off
    offs = -half_width + ds_off * (np.arange(n_off) + 0.5)
    _, nus, ns = planar_directions(a, b, n_ang)
    out = []
    for nu, n in zip(nus, ns):
        base = y + offs[:, None] * n
        tp, tm = oracle.batch(base, nu)
        ds = PhaseDataset(nu, n, normal, offs, [0.0], tp, tm, y)
        if sisters:
            for t in pivots:
                piv = base + t * nu
                for d in (dtheta, -dtheta, 0.5 * dtheta, -0.5 * dtheta):
                    rot = rotate_towards(nu, n, d)
                    stp, stm = oracle.batch(piv, rot)
                    ds.sisters[(float(t), float(d))] = (stp[:, None], stm[:, None])
        out.append(ds)
    return out


# --------------------------------------------------------------------------
# filtered backprojection
# --------------------------------------------------------------------------


def ramlak_kernel(n, ds):
    """Spatial Ram-Lak kernel on offsets -(n-1)..(n-1)."""
    k = np.arange(-(n - 1), n)
    h = np.zeros(len(k))
    h[k == 0] = 1.0 / (4.0 * ds * ds)
    odd = (k % 2) != 0
    h[odd] = -1.0 / (np.pi**2 * k[odd].astype(float) ** 2 * ds * ds)
    return h


def ramp_filter(sinogram, ds, band: float = 1.0):
    """Convolve each row with the Ram-Lak kernel (``band`` = cutoff / Nyquist)."""
    sino = np.atleast_2d(np.asarray(sinogram, float))
    n = sino.shape[1]
    h = ramlak_kernel(n, ds)
    size = int(2 ** np.ceil(np.log2(len(h) + n - 1)))
    H = np.fft.rfft(h, size)
    if band < 1.0:
        f = np.fft.rfftfreq(size)
        H = H * (f <= 0.5 * band)
    conv = np.fft.irfft(np.fft.rfft(sino, size, axis=1) * H[None], size, axis=1)
    return ds * conv[:, n - 1:2 * n - 1]


def fbp(sinogram, phis, offsets, us, ws, band: float = 1.0):
    """Filtered backprojection; image[iw, iu] at plane coordinates (us[iu], ws[iw])."""
    if len(phis) < 2:
        raise InsufficientAngles("need at least two projection angles")
    ds = float(offsets[1] - offsets[0])
    q = ramp_filter(sinogram, ds, band)
    img = backproject(q, phis, offsets[0], ds, us, ws)
    return img * np.pi / len(phis)


def _plane_frame(datasets):
    y = datasets[0].origin
    normal = datasets[0].e2
    a = datasets[0].nu
    b = np.cross(normal, a)
    for d in datasets:
        if abs(np.dot(d.nu, normal)) > 1e-12 or np.linalg.norm(d.origin - y) > 1e-12:
            raise ValueError("datasets do not share one plane")
    phis = np.array([np.arctan2(np.dot(d.nu, b), np.dot(d.nu, a)) for d in datasets])
    phis = np.mod(phis, np.pi)
    return y, a, b, normal, phis


def _tile(half, n):
    h = 2.0 * half / n
    return -half + h * (np.arange(n) + 0.5)


def reconstruct_A0(datasets: list[PhaseDataset], tile_half: float = 2.0, n_tile: int = 64, band: float = 1.0,
                   min_angles: int = 16, truth=None) -> ReconstructionGrid:
    """FBP of the planar X-ray data of A0 on a tile centred at the datasets' common origin."""
    if len(datasets) < min_angles:
        raise InsufficientAngles(f"{len(datasets)} directions < {min_angles}")
    y, a, b, normal, phis = _plane_frame(datasets)
    sino = np.stack([decouple(d)[1][:, 0] for d in datasets])
    offs = datasets[0].s1
    us = _tile(tile_half, n_tile)
    img = fbp(sino, phis, offs, us, us, band)
    grid = ReconstructionGrid(y, a, b, us, us.copy(), img, label="A0")
    grid.point_value = float(fbp(sino, phis, offs, np.zeros(1), np.zeros(1), band)[0, 0])
    if truth is not None:
        grid.truth = truth(grid.points())
    return grid


def moment_sinogram(datasets: list[PhaseDataset]):
    """X-ray data of ``B . normal`` from the pivot sisters of each dataset."""
    rows = []
    for d in datasets:
        pivots = sorted({k[0] for k in d.sisters})
        if len(pivots) != 2:
            raise MomentInversionIllposed("each line needs angular sisters about exactly two pivots")
        derivs = []
        for t in pivots:
            dts = sorted({k[1] for k in d.sisters if k[0] == t and k[1] > 0})
            if len(dts) != 2:
                raise MomentInversionIllposed("sisters at +-dtheta and +-dtheta/2 are required")
            half, full = dts

            def int_A(key):
                tp, tm = d.sisters[key]
                return 0.5 * (np.asarray(tp) - np.asarray(tm))[:, 0]

            d1 = (int_A((t, full)) - int_A((t, -full))) / (2 * full)
            d2 = (int_A((t, half)) - int_A((t, -half))) / (2 * half)
            derivs.append((4.0 * d2 - d1) / 3.0)
        # rotating towards the in-plane normal n gives moments of B . (n x nu) = -B . normal
        # about each pivot; their difference is (t1 - t2) times the X-ray of B . normal
        rows.append((derivs[0] - derivs[1]) / (pivots[0] - pivots[1]))
    return np.stack(rows)


def reconstruct_B_component(datasets: list[PhaseDataset], tile_half: float = 2.0, n_tile: int = 64,
                            band: float = 1.0, min_angles: int = 32, truth=None) -> ReconstructionGrid:
    """``B . normal`` on the tile of the datasets' plane."""
    if len(datasets) < min_angles:
        raise MomentInversionIllposed(f"{len(datasets)} directions < {min_angles}")
    y, a, b, normal, phis = _plane_frame(datasets)
    sino = moment_sinogram(datasets)
    us = _tile(tile_half, n_tile)
    img = fbp(sino, phis, datasets[0].s1, us, us, band)
    grid = ReconstructionGrid(y, a, b, us, us.copy(), img, label="B.n")
    grid.point_value = float(fbp(sino, phis, datasets[0].s1, np.zeros(1), np.zeros(1), band)[0, 0])
    if truth is not None:
        grid.truth = truth(grid.points()) @ normal
    return grid


def reconstruct_B(plane_datasets: list[list[PhaseDataset]], **kw):
    """B at the common centre of three planes with independent normals.

    Returns (B vector, list of component grids).
    """
    grids = [reconstruct_B_component(ds, **kw) for ds in plane_datasets]
    N = np.array([np.cross(g.a, g.b) for g in grids])
    vals = np.array([g.center_value for g in grids])
    if len(grids) != 3 or abs(np.linalg.det(N)) < 1e-6:
        raise MomentInversionIllposed("need three planes with independent normals")
    return np.linalg.solve(N, vals), grids


def acquire_B_planes(oracle: SceneOracle, y, n_ang: int = 64, n_off: int = 128, half_width: float = 4.0,
                     dtheta: float = 1e-3, obstacle: Obstacle | None = None):
    """Sister data on the three coordinate planes through y (normals e_x, e_y, e_z)."""
    E = np.eye(3)
    planes = []
    for k in range(3):
        a, b = E[(k + 1) % 3], E[(k + 2) % 3]
        planes.append(acquire_planar(oracle, y, a, b, n_ang, n_off, half_width, sisters=True,
                                     dtheta=dtheta, obstacle=obstacle))
    return planes


# --------------------------------------------------------------------------
# fluxes, long-range flux and A_inf sums
# --------------------------------------------------------------------------


def _modulus(A0_zero, modulus):
    natural = TWO_PI if A0_zero else np.pi
    if modulus is None:
        return natural
    if modulus == TWO_PI and not A0_zero:
        raise ModeMismatch("fluxes are only determined modulo pi when A0 is present")
    if modulus not in (TWO_PI, np.pi):
        raise ModeMismatch("modulus must be pi or 2 pi")
    return modulus


def _circular_mean(angles):
    angles = np.asarray(angles, float)
    angles = angles[~np.isnan(angles)]
    if angles.size == 0:
        raise ValueError("no lines of the requested class in the dataset")
    return float(np.angle(np.mean(np.exp(1j * angles))))


def _gauge_free_phase(tp, tm, A0_zero):
    """Observable phase of ``int A``: t+ (mod 2 pi) if A0 = 0, else (t+ - t-) (mod 2 pi) = 2 int A."""
    return np.asarray(tp) if A0_zero else np.asarray(tp) - np.asarray(tm)


def recover_flux_mod(ds: PhaseDataset, h1, h2, A0_zero: bool = True, modulus=None) -> float:
    """Class-difference phase reduced to ``[0, 2 pi)`` (A0 = 0) or ``[0, pi)``."""
    m = _modulus(A0_zero, modulus)
    if ds.labels is None:
        raise ValueError("dataset carries no homology labels")
    lab = ds.labels.reshape(-1, ds.labels.shape[-1])
    ph = _gauge_free_phase(ds.theta_plus, ds.theta_minus, A0_zero).reshape(-1)
    sel1 = np.all(lab == np.asarray(h1), axis=1) & ~np.isnan(ph)
    sel2 = np.all(lab == np.asarray(h2), axis=1) & ~np.isnan(ph)
    diff = _circular_mean(ph[sel1]) - _circular_mean(ph[sel2])
    if A0_zero:
        val = wrap(diff, TWO_PI)
        return float(wrap(val, m))
    return float(wrap(0.5 * wrap(diff, TWO_PI), m))


def plane_flux(B, x, v, vperp, tol: float = 1e-9, half0: float = 4.0, n: int = 64, max_doublings: int = 6) -> float:
    """Flux of B through ``{x + a v + b vperp, b >= 0}`` with normal ``v x vperp``."""
    if B is None:
        return 0.0
    x = np.asarray(x, float)
    v, vperp = unit(v), unit(vperp)
    normal = np.cross(v, vperp)
    g, w = np.polynomial.legendre.leggauss(n)
    prev = None
    L = half0
    for _ in range(max_doublings):
        al = L * g
        be = 0.5 * L * (g + 1.0)
        P = x + al[:, None, None] * v + be[None, :, None] * vperp
        val = float(np.einsum("i,j,ij->", L * w, 0.5 * L * w, B(P) @ normal))
        if prev is not None and abs(val - prev) < tol:
            return val
        prev = val
        L *= 2.0
        n = n * 2
        g, w = np.polynomial.legendre.leggauss(n)
    raise BCorrectionNonConvergent(f"half-plane flux of B still changing by {abs(val - prev):.3g}")


def far_radius(obstacle: Obstacle | None = None, extra: float = 0.0):
    rk = obstacle.enclosing_radius() if obstacle is not None and obstacle.components else 0.0
    return max(rk, extra) + 1.0


def recover_Phi_L(oracle, v, A0_zero: bool = True, B=None, R: float | None = None, vperp=None,
                  obstacle: Obstacle | None = None, modulus=None) -> float:
    """Long-range flux from the phase of one far line, minus the half-plane B flux.

    Reduced to ``(-m/2, m/2]`` with m = 2 pi (A0 = 0) or pi.
    """
    m = _modulus(A0_zero, modulus)
    v = unit(v)
    vperp = orthonormal_basis(v)[0] if vperp is None else unit(vperp)
    R = far_radius(obstacle, 4.0) if R is None else R
    x = R * vperp
    p = oracle(LineQuery(x, v))
    ph = _gauge_free_phase(p.theta_plus, p.theta_minus, A0_zero)
    int_A = float(wrap(ph, TWO_PI)) if A0_zero else 0.5 * float(wrap(ph, TWO_PI))
    val = int_A - plane_flux(B, x, v, vperp)
    return float(wrap_centered(val, m))


def recover_Ainf_sum(oracle, v, A0_zero: bool = True, B=None, dtheta: float = 1e-3, R: float | None = None,
                     obstacle: Obstacle | None = None) -> np.ndarray:
    """``A_inf(v) + A_inf(-v)`` from theta-derivatives of the recovered long-range flux."""
    m = TWO_PI if A0_zero else np.pi
    v = unit(v)
    w1, w2 = orthonormal_basis(v)
    out = np.zeros(3)
    for wa, wb in ((w1, w2), (w2, w1)):
        def phi(t):
            # the pivot R*wb stays orthogonal to every rotated direction
            return recover_Phi_L(oracle, rotate_towards(v, wa, t), A0_zero, B, R, vperp=wb, obstacle=obstacle)

        ref = phi(0.0)

        def diff(t):
            return float(wrap_centered(phi(t) - ref, m) - wrap_centered(phi(-t) - ref, m)) / (2 * t)

        d1 = diff(dtheta)
        d2 = diff(0.5 * dtheta)
        out += ((4.0 * d2 - d1) / 3.0) * wa
    return out


def recover_Ainf_sum_moment(oracle, x, v, B, dtheta: float = 1e-3) -> np.ndarray:
    """Same quantity via the pivot derivative at ``x`` minus the first-moment of B."""
    from .lineflux import field_moment

    v = unit(v)
    x = np.asarray(x, float)
    x = x - np.dot(x, v) * v
    w1, w2 = orthonormal_basis(v)
    out = np.zeros(3)
    for wa in (w1, w2):
        def int_A(t):
            p = oracle(LineQuery(x, rotate_towards(v, wa, t)))
            return p.int_A

        d1 = (int_A(dtheta) - int_A(-dtheta)) / (2 * dtheta)
        d2 = (int_A(0.5 * dtheta) - int_A(-0.5 * dtheta)) / dtheta
        mom = field_moment(B, x, v, wa) if B is not None else 0.0
        out += ((4.0 * d2 - d1) / 3.0 - mom) * wa
    return out


def recover_Ainf(*args, **kwargs):
    """Refused: the data determine only ``A_inf(v) + A_inf(-v)``."""
    raise NotDetermined(
        "A_inf(v) alone is not determined by high-momentum scattering data; "
        "only the even part A_inf(v) + A_inf(-v) is (use recover_Ainf_sum)"
    )
