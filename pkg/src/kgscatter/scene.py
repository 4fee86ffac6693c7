"""Scene configuration: YAML <-> SceneConfig <-> potentials, obstacle, solver scene.

A scene file is a nested mapping::

    name: ab_torus
    seed: 0
    mass: 1.0
    flags: {A0_zero: true, B_zero: true}
    obstacle: {tori: [{center: [0,0,0], axis: [0,0,1], major_radius: 2, minor_radius: 0.5}], balls: [], collar: null}
    potentials:
      - {kind: ab_torus, torus: 0, flux: 1.0471975511965976}
    dataset: {directions: [[0,0,1]], half_width: 3.0, n_offsets: 9, classify: true}
    solver: {...}
    inversion: {...}
    output: out

``SceneConfig.from_dict`` fills every default, so ``to_dict`` of a parsed
config is complete and parse -> serialize -> parse is a fixed point.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import ConfigError
from .geometry import Ball, Obstacle, Torus
from .potentials import (
    GaugeTransformedPotential,
    GaussianBumpField,
    GaussianElectric,
    GaussianGauge,
    InversePowerElectric,
    SphereFunction,
    SumElectric,
    SumPotential,
    ZeroElectric,
    ZeroPotential,
    make_ab_torus_potential,
    make_coulomb_potential,
    make_longrange_potential,
)

VECTOR_KINDS = ("ab_torus", "coulomb_gauge", "longrange_tail", "gaussian_gauge")
ELECTRIC_KINDS = ("gaussian_electric", "inverse_power")

_POTENTIAL_DEFAULTS = {
    "ab_torus": {"torus": 0, "flux": 1.0},
    "coulomb_gauge": {"center": [0.0, 0.0, 0.0], "direction": [0.0, 0.0, 1.0], "amplitude": 1.0, "width": 1.0,
                      "method": "analytic"},
    "longrange_tail": {"const": 0.0, "linear": [0.0, 0.0, 0.0],
                       "quadratic": [[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]], "cubic_xyz": 0.0,
                       "r0": 1.0},
    "gaussian_gauge": {"amplitude": 1.0, "center": [0.0, 0.0, 0.0], "width": 1.0, "slab": False},
    "gaussian_electric": {"amplitude": 1.0, "center": [0.0, 0.0, 0.0], "width": 1.0, "slab": False},
    "inverse_power": {"amplitude": 0.5, "zeta": 3.0, "scale": 1.0, "center": [0.0, 0.0, 0.0], "window": None,
                      "slab": False},
}

_DATASET_DEFAULTS = {"directions": [[0.0, 0.0, 1.0]], "half_width": 3.0, "n_offsets": 9, "classify": True,
                     "origin": [0.0, 0.0, 0.0], "tol": 1e-10}

_SOLVER_DEFAULTS = {"n": 512, "length": 24.0, "absorb_width": 2.0, "sigma": 1.5, "cfl": 0.2, "T": None,
                    "envelope": True, "impact": 1.0, "v_list": [4.0, 8.0, 16.0, 32.0], "components": [1],
                    "slope_band": [-1.3, -0.7], "resolution_check": True, "radius": None}

_INVERSION_DEFAULTS = {"products": ["A0"], "center": [0.0, 0.0, 0.0], "n_angles": 64, "n_offsets": 128,
                       "half_width": 4.0, "tile_half": 2.0, "n_tile": 64, "band": 1.0, "dtheta": 1e-3,
                       "directions": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]}


def _plain(x):
    """Convert numpy scalars/arrays and tuples to plain YAML-friendly types."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_plain(v) for v in x]
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, int) or x is None or isinstance(x, str):
        return x
    if isinstance(x, float):
        return float(x)
    raise ConfigError(f"unsupported config value {x!r}")


def _merge(defaults, given, where):
    given = dict(given or {})
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    out = copy.deepcopy(defaults)
    out.update(given)
    return out


@dataclass
class SceneConfig:
    name: str = "scene"
    seed: int = 0
    mass: float = 1.0
    flags: dict = field(default_factory=lambda: {"A0_zero": False, "B_zero": False})
    obstacle: dict = field(default_factory=lambda: {"tori": [], "balls": [], "collar": None})
    potentials: list = field(default_factory=list)
    dataset: dict = field(default_factory=lambda: dict(_DATASET_DEFAULTS))
    solver: dict | None = None
    inversion: dict | None = None
    output: str = "out"

    # ---------------------------------------------------------------- parse

    @staticmethod
    def from_dict(d: dict) -> "SceneConfig":
        d = dict(d or {})
        known = {"name", "seed", "mass", "flags", "obstacle", "potentials", "dataset", "solver", "inversion",
                 "output"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
        pots = []
        for i, p in enumerate(d.get("potentials") or []):
            p = dict(p)
            kind = p.pop("kind", None)
            if kind not in _POTENTIAL_DEFAULTS:
                raise ConfigError(f"potential {i}: unknown kind {kind!r}")
            tag = p.pop("tag", None)
            q = _merge(_POTENTIAL_DEFAULTS[kind], p, f"potential {i} ({kind})")
            q = {"kind": kind, **q}
            if tag is not None:
                q["tag"] = tag
            pots.append(q)
        obs = _merge({"tori": [], "balls": [], "collar": None}, d.get("obstacle"), "obstacle")
        obs["tori"] = [_merge({"center": [0.0, 0.0, 0.0], "axis": [0.0, 0.0, 1.0], "major_radius": 2.0,
                               "minor_radius": 0.5}, t, "torus") for t in obs["tori"]]
        obs["balls"] = [_merge({"center": [0.0, 0.0, 0.0], "radius": 1.0}, b, "ball") for b in obs["balls"]]
        flags = _merge({"A0_zero": False, "B_zero": False}, d.get("flags"), "flags")
        cfg = SceneConfig(
            name=str(d.get("name", "scene")),
            seed=int(d.get("seed", 0)),
            mass=float(d.get("mass", 1.0)),
            flags={k: bool(v) for k, v in flags.items()},
            obstacle=obs,
            potentials=pots,
            dataset=_merge(_DATASET_DEFAULTS, d.get("dataset"), "dataset"),
            solver=None if d.get("solver") is None else _merge(_SOLVER_DEFAULTS, d["solver"], "solver"),
            inversion=None if d.get("inversion") is None else _merge(_INVERSION_DEFAULTS, d["inversion"], "inversion"),
            output=str(d.get("output", "out")),
        )
        cfg._normalise()
        cfg.check()
        return cfg

    def _normalise(self):
        # canonical plain types so that serialisation is a fixed point
        for k in ("obstacle", "dataset", "solver", "inversion"):
            val = getattr(self, k)
            if val is not None:
                setattr(self, k, _plain(val))
        self.potentials = [_plain(p) for p in self.potentials]
        if not (self.mass > 0):
            raise ConfigError("mass must be positive")

    @staticmethod
    def from_yaml(text: str) -> "SceneConfig":
        try:
            d = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"unparseable config: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        return SceneConfig.from_dict(d)

    @staticmethod
    def load(path) -> "SceneConfig":
        with open(path, encoding="utf-8") as fh:
            return SceneConfig.from_yaml(fh.read())

    def to_dict(self) -> dict:
        d = {"name": self.name, "seed": self.seed, "mass": self.mass, "flags": dict(self.flags),
             "obstacle": self.obstacle, "potentials": self.potentials, "dataset": self.dataset,
             "solver": self.solver, "inversion": self.inversion, "output": self.output}
        return _plain(d)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=None)

    # ---------------------------------------------------------------- checks

    def check(self):
        kinds = [p["kind"] for p in self.potentials]
        if self.flags["A0_zero"] and any(k in ELECTRIC_KINDS for k in kinds):
            raise ConfigError("flag A0_zero is set but an electric potential is configured")
        if self.flags["B_zero"] and "coulomb_gauge" in kinds:
            raise ConfigError("flag B_zero is set but a magnetic field (coulomb_gauge) is configured")
        n_tori = len(self.obstacle["tori"])
        for p in self.potentials:
            if p["kind"] == "ab_torus" and not (0 <= int(p["torus"]) < n_tori):
                raise ConfigError(f"ab_torus refers to torus {p['torus']} but the obstacle has {n_tori}")

    # ---------------------------------------------------------------- builders

    def build_obstacle(self) -> Obstacle:
        comps = [Torus(tuple(t["center"]), tuple(t["axis"]), float(t["major_radius"]), float(t["minor_radius"]))
                 for t in self.obstacle["tori"]]
        comps += [Ball(tuple(b["center"]), float(b["radius"])) for b in self.obstacle["balls"]]
        return Obstacle(tuple(comps), self.obstacle["collar"])

    def build(self):
        """Return ``(A, A0, obstacle, gauges)``; ``gauges`` lists the gauge functions with angular limits."""
        obstacle = self.build_obstacle()
        vec, elec, gauges = [], [], []
        for p in self.potentials:
            kind = p["kind"]
            if kind == "ab_torus":
                vec.append(make_ab_torus_potential(obstacle, int(p["torus"]), float(p["flux"])))
            elif kind == "coulomb_gauge":
                B = GaussianBumpField(p["center"], p["direction"], float(p["amplitude"]), float(p["width"]))
                vec.append(make_coulomb_potential(B, p["method"], obstacle=obstacle))
            elif kind == "longrange_tail":
                f = SphereFunction(float(p["const"]), tuple(p["linear"]),
                                   tuple(tuple(r) for r in p["quadratic"]), float(p["cubic_xyz"]))
                A, g = make_longrange_potential(f, float(p["r0"]), obstacle)
                vec.append(A)
                gauges.append(g)
            elif kind == "gaussian_gauge":
                g = GaussianGauge(float(p["amplitude"]), p["center"], float(p["width"]), bool(p["slab"]))
                vec.append(GaugeTransformedPotential(ZeroPotential(), g))
                gauges.append(g)
            elif kind == "gaussian_electric":
                elec.append(GaussianElectric(float(p["amplitude"]), p["center"], float(p["width"]), bool(p["slab"])))
            elif kind == "inverse_power":
                w = None if p["window"] is None else tuple(p["window"])
                elec.append(InversePowerElectric(float(p["amplitude"]), float(p["zeta"]), float(p["scale"]),
                                                 p["center"], w, bool(p["slab"])))
            if "tag" in p and kind in VECTOR_KINDS:
                vec[-1].tag = p["tag"]
        if not vec:
            A = ZeroPotential()
            A.obstacle = obstacle
        elif len(vec) == 1:
            A = vec[0]
        else:
            A = SumPotential(vec)
            A.obstacle = obstacle
        if A.obstacle is None:
            A.obstacle = obstacle
        A0 = ZeroElectric() if not elec else (elec[0] if len(elec) == 1 else SumElectric(elec))
        return A, A0, obstacle, gauges

    def slab_scene(self):
        """The solver's 2D-slab scene (x3-independent potentials only)."""
        from .kg_solver import SlabScene

        A, A0, obstacle, _ = self.build()
        for p in self.potentials:
            if not p.get("slab", False):
                raise ConfigError(f"potential {p['kind']} is not x3-independent; solver scenes need slab: true")
        radius = self.solver.get("radius") if self.solver else None
        if radius is None:
            radius = 0.0
            for p in self.potentials:
                c = float(np.linalg.norm(np.asarray(p["center"])[:2]))
                if p["kind"] == "inverse_power" and p["window"] is not None:
                    radius = max(radius, c + float(p["window"][1]))
                elif p["kind"] in ("gaussian_electric", "gaussian_gauge"):
                    radius = max(radius, c + 6.0 * float(p["width"]))
                else:
                    raise ConfigError(f"cannot bound the support of {p['kind']}; set solver.radius")
        return SlabScene(A=None if A.is_zero() else A, A0=None if A0.is_zero() else A0,
                         radius=float(radius), name=self.name)


# --------------------------------------------------------------------------
# built-in scenes
# --------------------------------------------------------------------------


def builtin(name: str, **overrides) -> SceneConfig:
    """Ready-made scenes: ab_torus, coulomb_gauge, longrange_tail, gaussian_electric, inverse_power, empty."""
    torus = {"center": [0.0, 0.0, 0.0], "axis": [0.0, 0.0, 1.0], "major_radius": 2.0, "minor_radius": 0.5}
    scenes = {
        "empty": {"name": "empty", "flags": {"A0_zero": True, "B_zero": True}},
        "ab_torus": {
            "name": "ab_torus",
            "flags": {"A0_zero": True, "B_zero": True},
            "obstacle": {"tori": [torus]},
            "potentials": [{"kind": "ab_torus", "torus": 0, "flux": float(np.pi / 3)}],
            "dataset": {"directions": [[0.0, 0.0, 1.0]], "half_width": 3.0, "n_offsets": 9, "classify": True},
        },
        "coulomb_gauge": {
            "name": "coulomb_gauge",
            "flags": {"A0_zero": True},
            "potentials": [{"kind": "coulomb_gauge", "center": [0.1, -0.2, 0.05], "direction": [0.3, 0.4, 1.0],
                            "amplitude": 1.0, "width": 0.8, "method": "analytic"}],
            "inversion": {"products": ["B"], "n_angles": 64, "n_offsets": 96, "half_width": 3.0},
        },
        "longrange_tail": {
            "name": "longrange_tail",
            "flags": {"A0_zero": True, "B_zero": True},
            "potentials": [{"kind": "longrange_tail", "linear": [0.3, -0.2, 0.0], "const": 0.0, "r0": 1.0}],
            "inversion": {"products": ["Phi_L", "Ainf_sum"]},
        },
        "gaussian_electric": {
            "name": "gaussian_electric",
            "flags": {"B_zero": True},
            "potentials": [{"kind": "gaussian_electric", "amplitude": 1.0, "center": [0.2, -0.1, 0.0],
                            "width": 0.7}],
            "inversion": {"products": ["A0"], "n_angles": 64, "n_offsets": 128, "half_width": 4.0},
        },
        "inverse_power": {
            "name": "inverse_power",
            "flags": {"B_zero": True},
            "potentials": [{"kind": "inverse_power", "amplitude": -0.9, "zeta": 3.0, "scale": 2.0,
                            "window": [5.0, 7.5], "slab": True}],
            "solver": {"n": 512, "length": 24.0, "v_list": [4.0, 8.0, 16.0, 32.0], "impact": 1.0},
        },
    }
    if name not in scenes:
        raise ConfigError(f"unknown built-in scene {name!r}; choose from {sorted(scenes)}")
    d = copy.deepcopy(scenes[name])
    d.update(overrides)
    return SceneConfig.from_dict(d)


# --------------------------------------------------------------------------
# class validation
# --------------------------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str


def validate(cfg: SceneConfig, n_points: int = 64) -> list[CheckResult]:
    """Geometry, decay-class, curl and circulation checks of a scene."""
    from .potentials import circulation, curl_fd, decay_slope, hole_loop

    out = []
    try:
        A, A0, obstacle, _ = cfg.build()
    except Exception as exc:  # the construction error is the report
        return [CheckResult("geometry", False, f"{type(exc).__name__}: {exc}")]
    out.append(CheckResult("geometry", True, f"{len(obstacle.components)} component(s), collar {obstacle.collar:.3g}"))

    rk = obstacle.enclosing_radius()
    r_lo = max(8.0, 4.0 * rk)
    r_hi = 8.0 * r_lo
    parts = A.parts if isinstance(A, SumPotential) else [A]
    for i, p in enumerate(parts):
        if p.is_zero():
            continue
        s = decay_slope(p, r_lo, r_hi, seed=cfg.seed)
        if p.tag == "SR":
            ok = s < -1.5
            want = "< -1.5 (short range)"
        else:
            ok = -1.2 <= s <= -0.8
            want = "in [-1.2, -0.8] (long range)"
        out.append(CheckResult(f"decay[vector {i}]", bool(ok), f"tag {p.tag}: fitted slope {s:.3f}, expected {want}"))
    if not A0.is_zero():
        slab = all(p.get("slab", False) for p in cfg.potentials if p["kind"] in ELECTRIC_KINDS)
        s = decay_slope(A0, r_lo, r_hi, seed=cfg.seed, slab=slab)
        out.append(CheckResult("decay[A0]", bool(s < -1.0), f"fitted slope {s:.3f}, expected < -1"))

    rng = np.random.default_rng(cfg.seed)
    pts = rng.normal(size=(4 * n_points, 3)) * max(1.5, rk)
    if obstacle.components:
        pts = pts[obstacle.distance(pts) > obstacle.collar + 0.05]
    pts = pts[:n_points]
    if not A.is_zero() and len(pts):
        c = curl_fd(A, pts)
        B = A.field(pts) if hasattr(A, "field") else np.zeros_like(pts)
        err = float(np.max(np.abs(c - B)))
        scale = max(1.0, float(np.max(np.abs(B))))
        out.append(CheckResult("curl", err < 1e-5 * scale, f"max |curl A - B| = {err:.3g}"))
    for i, t in enumerate(obstacle.tori):
        got = circulation(A, hole_loop(t), n=128) if not A.is_zero() else 0.0
        want = A.fluxes.get(i, 0.0) if hasattr(A, "fluxes") else 0.0
        out.append(CheckResult(f"circulation[torus {i}]", abs(got - want) < 1e-6,
                               f"hole-loop circulation {got:.9f}, declared flux {want:.9f}"))
    return out
