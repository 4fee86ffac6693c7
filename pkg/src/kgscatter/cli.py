"""``kgscatter`` command line: validate, forward, verify, invert, export-plots.

Every command reads one scene file (``--config``, YAML) and writes CSV files
into ``--out`` (default: the scene's ``output`` entry).  ``--threads`` falls
back to the ``KGSCATTER_THREADS`` environment variable.
"""
from __future__ import annotations

import argparse
import glob
import logging
import os
import sys
import warnings

import numpy as np

from . import io
from .errors import ConfigError, KGScatterError, NotDetermined
from .scene import SceneConfig, validate

log = logging.getLogger("kgscatter")


def _threads(args):
    if getattr(args, "threads", None):
        return int(args.threads)
    env = os.environ.get("KGSCATTER_THREADS")
    return int(env) if env else 1


def _setup_threads(n):
    os.environ["KGSCATTER_THREADS"] = str(n)
    if n <= 1:
        return
    try:
        import numba

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    except Exception:  # numba missing or thread layer unavailable: single threaded
        pass


def _load(args) -> SceneConfig:
    if not args.config:
        raise ConfigError("--config is required")
    if not os.path.exists(args.config):
        raise ConfigError(f"config file not found: {args.config}")
    cfg = SceneConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = int(args.seed)
    return cfg


def _outdir(args, cfg):
    out = args.out or cfg.output
    os.makedirs(out, exist_ok=True)
    return out


def _write_kv(path, items):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for k, v in items:
            fh.write(f"{k}={io.fmt(v)}\n")


# --------------------------------------------------------------------------
# validate
# --------------------------------------------------------------------------


def cmd_validate(args) -> int:
    try:
        cfg = _load(args)
    except KGScatterError as exc:
        print(f"FAIL config: {exc}")
        return 1
    results = validate(cfg)
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'} {r.name}: {r.detail}")
    return 0 if all(r.ok for r in results) else 1


# --------------------------------------------------------------------------
# forward
# --------------------------------------------------------------------------


def forward(cfg: SceneConfig, out: str, tol: float | None = None):
    """Batch line integrals and phase tables over the dataset block (+ flux records)."""
    from .geometry import LineQuery, classify_line, unit
    from .hm_scattering import TransverseGrid
    from .lineflux import flux_record, xray_batch

    A, A0, obstacle, _ = cfg.build()
    ds = cfg.dataset
    tol = float(tol if tol is not None else ds["tol"])
    n = int(ds["n_offsets"])
    xb, xd, xl, ia_all, i0_all, err_all = [], [], [], [], [], []
    ph_header, ph_rows = None, []
    classes = {}
    scale = max(1.0, obstacle.enclosing_radius())
    k = len(obstacle.tori) if ds["classify"] else 0
    for d_i, nu in enumerate(ds["directions"]):
        nu = unit(nu)
        grid = TransverseGrid.square(nu, float(ds["half_width"]), n, origin=ds["origin"])
        S1, S2 = np.meshgrid(grid.s1, grid.s2, indexing="ij")
        base = grid.base_points().reshape(-1, 3)
        ok = np.ones(len(base), bool)
        if obstacle.components:
            ok = np.array([obstacle.line_distance(b, nu) > obstacle.collar for b in base])
        labels = np.zeros((len(base), k), dtype=np.int64) if k else None
        if k:
            for i in np.flatnonzero(ok):
                labels[i] = classify_line(obstacle, LineQuery(base[i], nu))
                classes.setdefault((d_i, tuple(labels[i])), (tuple(labels[i]), nu))
        ia = np.full(len(base), np.nan)
        i0 = np.full(len(base), np.nan)
        er = np.full(len(base), np.nan)
        if ok.any():
            ia[ok], i0[ok], er[ok] = xray_batch(A, A0, base[ok], nu, tol=tol, scale=scale)
        xb.append(base)
        xd.append(np.broadcast_to(nu, base.shape))
        xl.append(labels)
        ia_all.append(ia)
        i0_all.append(i0)
        err_all.append(er)
        ph_header, rows = io.write_phase_table(None, d_i, S1.ravel(), S2.ravel(), labels, ia - i0, -ia - i0, nu)
        ph_rows.extend(rows)
    labels = np.concatenate(xl) if k else None
    io.write_xray_batch(os.path.join(out, "xray.csv"), np.concatenate(xb), np.concatenate(xd), labels,
                        np.concatenate(ia_all), np.concatenate(i0_all), np.concatenate(err_all))
    io.write_csv(os.path.join(out, "phases.csv"), ph_header, ph_rows)
    written = ["xray.csv", "phases.csv"]
    field_free = cfg.flags["A0_zero"] and cfg.flags["B_zero"]
    if field_free and classes:
        rows = []
        for key in sorted(classes):
            h, nu = classes[key]
            rec = flux_record(A, obstacle, h, nu)
            rows.append([key[0]] + list(h) + [rec.F_h, rec.Phi_L] + list(nu))
        io.write_csv(os.path.join(out, "flux.csv"),
                     ["dir"] + [f"h{i}" for i in range(k)] + ["F_h", "Phi_L", "v1", "v2", "v3"], rows)
        written.append("flux.csv")
    with open(os.path.join(out, "config.yaml"), "w", newline="", encoding="utf-8") as fh:
        fh.write(cfg.to_yaml())
    return written


def cmd_forward(args) -> int:
    cfg = _load(args)
    out = _outdir(args, cfg)
    files = forward(cfg, out, args.tol)
    for f in files:
        print(f"wrote {os.path.join(out, f)}")
    return 0


# --------------------------------------------------------------------------
# verify
# --------------------------------------------------------------------------


def solver_config(cfg: SceneConfig, threads: int):
    from .kg_solver import SolverConfig, SolverGrid

    s = cfg.solver
    grid = SolverGrid(int(s["n"]), float(s["length"]), float(s["absorb_width"]))
    return SolverConfig(grid=grid, m=cfg.mass, sigma=float(s["sigma"]), cfl=float(s["cfl"]),
                        T=None if s["T"] is None else float(s["T"]), envelope=bool(s["envelope"]), threads=threads)


def cmd_verify(args) -> int:
    from .kg_solver import convergence_study

    cfg = _load(args)
    if cfg.solver is None:
        raise ConfigError("verify needs a solver block in the config")
    out = _outdir(args, cfg)
    s = cfg.solver
    scfg = solver_config(cfg, _threads(args))
    scene = cfg.slab_scene()
    v_list = [float(v) * cfg.mass for v in s["v_list"]]
    check_v = min(v_list) if s["resolution_check"] else None
    run = convergence_study(scene, float(s["impact"]), v_list, scfg, tuple(s["components"]), check_v)
    cols, rows = run.table()
    io.write_csv(os.path.join(out, "run.csv"), cols, rows)
    fit = run.fit
    lo, hi = s["slope_band"]
    items = [("scene", cfg.name), ("degenerate", fit.degenerate)]
    status = 0
    if fit.degenerate:
        print(f"notice: {fit.note}")
    else:
        items += [("slope", fit.slope), ("slope_ci_low", fit.ci_low), ("slope_ci_high", fit.ci_high),
                  ("band_low", lo), ("band_high", hi)]
        inside = lo <= fit.slope <= hi
        items.append(("slope_in_band", inside))
        print(f"slope {fit.slope:.3f} (95% CI [{fit.ci_low:.3f}, {fit.ci_high:.3f}]), band [{lo}, {hi}]: "
              f"{'inside' if inside else 'OUTSIDE'}")
        status = 0 if inside else 1
    if run.resolution_check is not None:
        rc = run.resolution_check
        items += [("resolution_v", rc["v"]), ("resolution_change", rc["change"]),
                  ("resolution_ratio", rc["ratio"])]
        if not fit.degenerate and rc["ratio"] >= 0.1:
            print(f"warning: discretization dominates (grid doubling changes the phase by "
                  f"{rc['ratio']:.0%} of the v-error)")
            status = 1
    _write_kv(os.path.join(out, "verify.txt"), items)
    return status


# --------------------------------------------------------------------------
# invert
# --------------------------------------------------------------------------


def _write_grid(path, grid):
    pts = grid.points()
    U, W = np.meshgrid(grid.us, grid.ws, indexing="ij")
    truth = grid.truth if grid.truth is not None else np.full(grid.values.shape, np.nan)
    rows = [[U.flat[i], W.flat[i], pts.reshape(-1, 3)[i][0], pts.reshape(-1, 3)[i][1], pts.reshape(-1, 3)[i][2],
             grid.values.flat[i], truth.flat[i]] for i in range(U.size)]
    io.write_csv(path, ["u", "w", "x1", "x2", "x3", "value", "truth"], rows)


def invert(cfg: SceneConfig, out: str, tol: float | None = None):
    """Run the requested reconstructions; returns the key=value error summary items."""
    from .geometry import unit
    from .inversion import (
        SceneOracle,
        acquire_B_planes,
        acquire_dataset,
        acquire_planar,
        reconstruct_A0,
        reconstruct_B,
        recover_Ainf,
        recover_Ainf_sum,
        recover_flux_mod,
        recover_Phi_L,
    )

    A, A0, obstacle, gauges = cfg.build()
    inv = cfg.inversion
    if inv is None:
        raise ConfigError("invert needs an inversion block in the config")
    oracle = SceneOracle(A, A0, tol=float(tol) if tol is not None else 1e-10,
                         scale=max(1.0, obstacle.enclosing_radius()))
    A0_zero = cfg.flags["A0_zero"]
    y = np.asarray(inv["center"], float)
    items = [("scene", cfg.name)]
    for product in inv["products"]:
        if product == "A0":
            ds = acquire_planar(oracle, y, [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], int(inv["n_angles"]),
                                int(inv["n_offsets"]), float(inv["half_width"]), obstacle=obstacle)
            g = reconstruct_A0(ds, float(inv["tile_half"]), int(inv["n_tile"]), float(inv["band"]),
                               truth=None if A0.is_zero() else A0)
            _write_grid(os.path.join(out, "recon_A0.csv"), g)
            items += [("A0_rel_l2", g.rel_l2_error()), ("A0_max_abs", g.max_abs_error())]
        elif product == "B":
            planes = acquire_B_planes(oracle, y, int(inv["n_angles"]), int(inv["n_offsets"]),
                                      float(inv["half_width"]), float(inv["dtheta"]), obstacle)
            truth = A.field if hasattr(A, "field") and not A.field.is_zero() else None
            Bv, grids = reconstruct_B(planes, tile_half=float(inv["tile_half"]), n_tile=int(inv["n_tile"]),
                                      band=float(inv["band"]), truth=truth)
            for name, g in zip("xyz", grids):
                _write_grid(os.path.join(out, f"recon_B{name}.csv"), g)
                if truth is not None:
                    items.append((f"B{name}_rel_l2", g.rel_l2_error()))
            items += [(f"B{i + 1}", Bv[i]) for i in range(3)]
            if truth is not None:
                Bt = truth(y[None])[0]
                items += [(f"B{i + 1}_true", Bt[i]) for i in range(3)]
        elif product == "flux":
            dd = cfg.dataset
            s = np.linspace(-dd["half_width"], dd["half_width"], int(dd["n_offsets"]))
            rows = []
            for d_i, nu in enumerate(dd["directions"]):
                ds = acquire_dataset(oracle, nu, s, s, dd["origin"], obstacle=obstacle, classify=True,
                                     wrapped=True)
                lab = ds.labels.reshape(-1, ds.labels.shape[-1])
                ok = ~np.isnan(ds.theta_plus.reshape(-1))
                classes = sorted({tuple(int(c) for c in r) for r in lab[ok]})
                for h in classes[1:]:
                    val = recover_flux_mod(ds, h, classes[0], A0_zero)
                    rows.append([d_i] + list(h) + list(classes[0]) + [val])
                    truth = sum(hi * A.fluxes.get(i, 0.0) for i, hi in enumerate(h)) - \
                        sum(hi * A.fluxes.get(i, 0.0) for i, hi in enumerate(classes[0]))
                    m = 2 * np.pi if A0_zero else np.pi
                    err = abs(np.angle(np.exp(1j * (2 * np.pi / m) * (val - truth))))
                    items.append((f"flux_dir{d_i}_{'_'.join(map(str, h))}_err", err * m / (2 * np.pi)))
            k = len(obstacle.tori)
            io.write_csv(os.path.join(out, "flux_mod.csv"),
                         ["dir"] + [f"h{i}" for i in range(k)] + [f"ref_h{i}" for i in range(k)] + ["flux_mod"],
                         rows)
        elif product == "Phi_L":
            rows = []
            for d_i, v in enumerate(inv["directions"]):
                val = recover_Phi_L(oracle, v, A0_zero, obstacle=obstacle)
                la = A.lambda_inf_analytic(np.array([unit(v), -unit(v)]))
                truth = None if la is None else float(la[0] - la[1])
                rows.append([d_i] + list(unit(v)) + [val, np.nan if truth is None else truth])
                if truth is not None:
                    items.append((f"Phi_L_dir{d_i}_err", abs(np.angle(np.exp(1j * (val - truth))))))
            io.write_csv(os.path.join(out, "phi_L.csv"), ["dir", "v1", "v2", "v3", "Phi_L", "truth"], rows)
        elif product == "Ainf_sum":
            rows = []
            for d_i, v in enumerate(inv["directions"]):
                val = recover_Ainf_sum(oracle, v, A0_zero, dtheta=float(inv["dtheta"]), obstacle=obstacle)
                u = np.array([unit(v), -unit(v)])
                an = A.a_inf_analytic(u)
                truth = None if an is None else an[0] + an[1]
                rows.append([d_i] + list(unit(v)) + list(val) + (list(truth) if truth is not None else [np.nan] * 3))
                if truth is not None:
                    items.append((f"Ainf_sum_dir{d_i}_err", float(np.max(np.abs(val - truth)))))
            io.write_csv(os.path.join(out, "ainf_sum.csv"),
                         ["dir", "v1", "v2", "v3", "sum1", "sum2", "sum3", "true1", "true2", "true3"], rows)
        elif product == "Ainf":
            recover_Ainf()
        else:
            raise ConfigError(f"unknown inversion product {product!r}")
    _write_kv(os.path.join(out, "errors.txt"), items)
    return items


def cmd_invert(args) -> int:
    cfg = _load(args)
    out = _outdir(args, cfg)
    try:
        items = invert(cfg, out, args.tol)
    except NotDetermined as exc:
        print(f"refused: {exc}")
        return 2
    for k, v in items:
        print(f"{k}={io.fmt(v)}")
    return 0


# --------------------------------------------------------------------------
# export-plots
# --------------------------------------------------------------------------


def export_plots(out: str):
    """Long-format (one observation per row) CSVs from the outputs in ``out``."""
    written = []
    p = os.path.join(out, "phases.csv")
    if os.path.exists(p):
        c = io.read_columns(p)
        rows = []
        for i in range(len(c["s1"])):
            for series in ("theta_plus", "theta_minus"):
                rows.append([int(c["dir"][i]), c["s1"][i], c["s2"][i], series, c[series][i]])
        io.write_csv(os.path.join(out, "plot_phases.csv"), ["dir", "x_perp1", "x_perp2", "series", "value"], rows)
        written.append("plot_phases.csv")
    p = os.path.join(out, "run.csv")
    if os.path.exists(p):
        c = io.read_columns(p)
        rows = [[np.log(v), np.log(e) if e > 0 else -np.inf] for v, e in zip(c["v"], c["abs_err"])]
        io.write_csv(os.path.join(out, "plot_convergence.csv"), ["log_v", "log_err"], rows)
        written.append("plot_convergence.csv")
    for p in sorted(glob.glob(os.path.join(out, "recon_*.csv"))):
        c = io.read_columns(p)
        name = os.path.basename(p)[len("recon_"):-4]
        rows = []
        for i in range(len(c["u"])):
            rows.append([c["u"][i], c["w"][i], "reconstruction", c["value"][i]])
            if not np.isnan(c["truth"][i]):
                rows.append([c["u"][i], c["w"][i], "truth", c["truth"][i]])
        io.write_csv(os.path.join(out, f"plot_recon_{name}.csv"), ["x", "y", "series", "value"], rows)
        written.append(f"plot_recon_{name}.csv")
    if not written:
        raise FileNotFoundError(f"no phase tables, runs or reconstructions found in {out}")
    return written


def cmd_export_plots(args) -> int:
    out = args.out
    if out is None:
        out = _load(args).output
    for f in export_plots(out):
        print(f"wrote {os.path.join(out, f)}")
    return 0


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(prog="kgscatter", description="High-momenta Klein-Gordon scattering toolkit")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn, help_ in (
        ("validate", cmd_validate, "run class-validation checks on a scene"),
        ("forward", cmd_forward, "batch line phases and flux records"),
        ("verify", cmd_verify, "time-domain solver convergence study"),
        ("invert", cmd_invert, "reconstructions from high-momentum phases"),
        ("export-plots", cmd_export_plots, "long-format CSVs for plotting"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="scene file (YAML)")
        p.add_argument("--out", help="output directory (default: the scene's output entry)")
        p.add_argument("--threads", type=int, default=None, help="worker threads (fallback: KGSCATTER_THREADS)")
        p.add_argument("--seed", type=int, default=None, help="override the scene's RNG seed")
        p.add_argument("--tol", type=float, default=None, help="quadrature tolerance")
        p.set_defaults(func=fn)
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    _setup_threads(_threads(args))
    try:
        return int(args.func(args))
    except (KGScatterError, FileNotFoundError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
