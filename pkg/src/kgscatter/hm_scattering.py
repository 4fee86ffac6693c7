"""High-momentum scattering model.

In the representation where the free Klein-Gordon operator is diagonal,
``U = Q F_W`` with ``F_W = diag(B_0, 1)``, the scattering operator acting on a
beam of momentum ``v nu`` becomes, as ``v -> inf``, multiplication by the
line-dependent diagonal phase matrix

    diag( exp(i int (A.nu - A0) dr), exp(-i int (A.nu + A0) dr) )

along the line through the transverse position in direction ``nu``.  This
module holds that phase pair, its change under a gauge transformation, the
field-free decomposition into hole flux plus long-range flux, and the
grid-level matrix element between two-component packets.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigNotFieldFree, SupportViolation
from .geometry import LineQuery, Obstacle, classify_line, orthonormal_basis, unit
from .lineflux import hole_flux, long_range_flux, xray, xray_batch


# --------------------------------------------------------------------------
# algebra of the diagonal representation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DiagonalizerAlgebra:
    """Matrices and symbols of the free diagonalisation for mass ``m``."""

    m: float = 1.0

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError("mass must be positive")

    Q = np.array([[1.0, 1j], [1.0, -1j]]) / np.sqrt(2.0)
    beta = np.array([[0.0, 1j], [-1j, 0.0]])

    @property
    def Q_inv(self):
        return self.Q.conj().T

    def dispersion(self, p):
        """``b0(p) = sqrt(|p|^2 + m^2)`` (p has trailing axis 3, or is a norm)."""
        p = np.asarray(p, float)
        p2 = np.sum(p * p, axis=-1) if p.ndim and p.shape[-1] == 3 else p * p
        return np.sqrt(p2 + self.m**2)

    def velocity(self, p):
        p = np.asarray(p, float)
        return p / self.dispersion(p)[..., None]

    def to_diagonal(self, phi_hat, chi_hat, b0):
        """``U (phi, chi)`` in Fourier space: ``Q (b0 phi, chi)``."""
        u = b0 * phi_hat
        return (u + 1j * chi_hat) / np.sqrt(2.0), (u - 1j * chi_hat) / np.sqrt(2.0)

    def from_diagonal(self, psi_p, psi_m, b0):
        s = np.sqrt(2.0)
        return (psi_p + psi_m) / (s * b0), -1j * (psi_p - psi_m) / s


# --------------------------------------------------------------------------
# phases along one line
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PhasePair:
    theta_plus: float
    theta_minus: float
    line: LineQuery | None = None
    v: float = np.inf

    @property
    def int_A(self):
        return 0.5 * (self.theta_plus - self.theta_minus)

    @property
    def int_A0(self):
        return -0.5 * (self.theta_plus + self.theta_minus)

    def matrix(self):
        return np.diag([np.exp(1j * self.theta_plus), np.exp(1j * self.theta_minus)])

    @staticmethod
    def from_integrals(int_A, int_A0, line=None, v=np.inf):
        return PhasePair(int_A - int_A0, -int_A - int_A0, line, v)


def hm_phase(A, A0, line: LineQuery, tol: float = 1e-10) -> PhasePair:
    """The v -> inf phase pair of the line."""
    s = xray(A, A0, line, tol=tol)
    return PhasePair.from_integrals(s.int_A, s.int_A0, line)


def gauge_transform_S(phases, lambda_inf, v):
    """Phase pair(s) after ``A -> A + grad(lambda)``.

    ``lambda_inf`` is a callable on unit vectors.  Accepts one PhasePair, a
    list or a dict of them, or a PhaseMap (all for beam direction ``v``).
    """
    v = unit(v)
    lp = float(lambda_inf(v))
    lm = float(lambda_inf(-v))
    d = lp - lm

    def one(p: PhasePair):
        return PhasePair(p.theta_plus + d, p.theta_minus - d, p.line, p.v)

    if isinstance(phases, PhasePair):
        return one(phases)
    if isinstance(phases, PhaseMap):
        return PhaseMap(phases.grid, phases.theta_plus + d, phases.theta_minus - d, phases.blocked.copy(), phases.labels)
    if isinstance(phases, dict):
        return {k: one(p) for k, p in phases.items()}
    return [one(p) for p in phases]


# --------------------------------------------------------------------------
# field-free decomposition
# --------------------------------------------------------------------------


@dataclass
class FluxCache:
    """Hole and long-range fluxes computed once per (class, direction)."""

    A: object
    obstacle: Obstacle
    hole: dict = field(default_factory=dict)
    long_range: dict = field(default_factory=dict)

    def F(self, h, v):
        key = (tuple(h), tuple(np.round(unit(v), 12)))
        if key not in self.hole:
            self.hole[key] = hole_flux(self.A, self.obstacle, h, v)
        return self.hole[key]

    def Phi_L(self, v):
        key = tuple(np.round(unit(v), 12))
        if key not in self.long_range:
            self.long_range[key] = long_range_flux(self.A, v, obstacle=self.obstacle)
        return self.long_range[key]


def _is_field_free(A, A0):
    b_zero = A.field.is_zero() if hasattr(A, "field") else False
    e_zero = A0 is None or A0.is_zero()
    return b_zero and e_zero


def hole_sum_phase(A, obstacle: Obstacle, v, x, A0=None, cache: FluxCache | None = None) -> PhasePair:
    """``theta_plus = F_h + Phi_L(A, v)``, ``theta_minus = -theta_plus`` (no line quadrature)."""
    if not _is_field_free(A, A0):
        raise ConfigNotFieldFree("hole decomposition needs B = 0 and A0 = 0 outside the obstacle")
    cache = cache or FluxCache(A, obstacle)
    line = LineQuery(np.asarray(x, float), unit(v))
    h = classify_line(obstacle, line)
    th = cache.F(h, v) + cache.Phi_L(v)
    return PhasePair(th, -th, line)


# --------------------------------------------------------------------------
# transverse phase maps and packet matrix elements
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TransverseGrid:
    """Grid ``origin + s1[i] e1 + s2[j] e2 + z[k] nu`` adapted to the beam direction."""

    nu: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    z: np.ndarray
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @staticmethod
    def square(nu, half_width, n, z_half=None, nz=None, origin=(0.0, 0.0, 0.0)):
        s = np.linspace(-half_width, half_width, n, endpoint=False) + half_width / n
        z_half = half_width if z_half is None else z_half
        nz = n if nz is None else nz
        z = np.linspace(-z_half, z_half, nz, endpoint=False) + z_half / nz
        return TransverseGrid(unit(nu), s, s.copy(), z, np.asarray(origin, float))

    @property
    def basis(self):
        return orthonormal_basis(self.nu)

    def base_points(self):
        e1, e2 = self.basis
        S1, S2 = np.meshgrid(self.s1, self.s2, indexing="ij")
        return self.origin + S1[..., None] * e1 + S2[..., None] * e2

    def points(self):
        b = self.base_points()
        return b[:, :, None, :] + self.z[None, None, :, None] * self.nu

    @property
    def cell(self):
        def step(a):
            return float(a[1] - a[0]) if len(a) > 1 else 1.0

        return step(self.s1) * step(self.s2) * step(self.z)


@dataclass
class PhaseMap:
    grid: TransverseGrid
    theta_plus: np.ndarray
    theta_minus: np.ndarray
    blocked: np.ndarray
    labels: np.ndarray | None = None


def phase_map(A, A0, grid: TransverseGrid, obstacle: Obstacle | None = None, tol: float = 1e-9,
              classify: bool = False) -> PhaseMap:
    """Phase pairs on every transverse grid line (lines meeting the collar are flagged)."""
    obstacle = obstacle if obstacle is not None else getattr(A, "obstacle", None)
    base = grid.base_points().reshape(-1, 3)
    n = base.shape[0]
    blocked = np.zeros(n, bool)
    labels = None
    if obstacle is not None and obstacle.components:
        blocked = np.array([obstacle.line_distance(b, grid.nu) <= obstacle.collar for b in base])
        if classify and obstacle.tori:
            labels = np.full((n, len(obstacle.tori)), np.iinfo(np.int64).min, dtype=np.int64)
            for i in np.flatnonzero(~blocked):
                labels[i] = classify_line(obstacle, LineQuery(base[i], grid.nu))
    tp = np.full(n, np.nan)
    tm = np.full(n, np.nan)
    ok = ~blocked
    if ok.any():
        scale = max(1.0, obstacle.enclosing_radius() if obstacle is not None and obstacle.components else 1.0)
        ia, i0, _ = xray_batch(A, A0, base[ok], grid.nu, tol=tol, scale=scale)
        tp[ok] = ia - i0
        tm[ok] = -ia - i0
    shape = (len(grid.s1), len(grid.s2))
    lab = labels.reshape(shape + (-1,)) if labels is not None else None
    return PhaseMap(grid, tp.reshape(shape), tm.reshape(shape), blocked.reshape(shape), lab)


def gaussian_packet(grid: TransverseGrid, center=(0.0, 0.0, 0.0), width: float = 1.0,
                    amplitudes=(1.0, 0.0)) -> np.ndarray:
    """Two-component Gaussian packet on the grid, shape (2, n1, n2, nz)."""
    p = grid.points() - np.asarray(center, float)
    g = np.exp(-0.5 * np.sum(p * p, axis=-1) / width**2).astype(complex)
    return np.stack([amplitudes[0] * g, amplitudes[1] * g])


def wavepacket_overlap(phases: PhaseMap, phi, psi, support_rtol: float = 1e-6) -> np.ndarray:
    """``< diag(e^{i theta+}, e^{i theta-}) phi, psi >`` per component.

    Inner product linear in the first slot: ``sum f conj(g) dV``.  Both packets
    must vanish (to ``support_rtol`` relative) on blocked lines.
    """
    phi = np.asarray(phi)
    psi = np.asarray(psi)
    if phi.shape != psi.shape or phi.shape[0] != 2:
        raise ValueError("packets must both have shape (2, n1, n2, nz)")
    for f in (phi, psi):
        col = np.max(np.abs(f), axis=(0, 3))
        peak = np.max(col) if col.size else 0.0
        if peak > 0 and np.any(col[phases.blocked] > support_rtol * peak):
            raise SupportViolation("packet support meets the shadow of the obstacle collar")
    tp = np.where(phases.blocked, 0.0, phases.theta_plus)
    tm = np.where(phases.blocked, 0.0, phases.theta_minus)
    w = np.stack([np.exp(1j * tp), np.exp(1j * tm)])[..., None]
    return np.sum(w * phi * np.conj(psi), axis=(1, 2, 3)) * phases.grid.cell
