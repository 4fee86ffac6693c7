"""Acceptance criteria 1-10; each test prints one PASS/FAIL line (also collected in the summary)."""
import filecmp
import os
import time

import numpy as np
import pytest

from kgscatter.cli import forward, solver_config
from kgscatter.geometry import LineQuery, Obstacle, Torus, closure_curve, curve_linking, default_closure_radius, unit
from kgscatter.hm_scattering import gauge_transform_S, hm_phase
from kgscatter.inversion import (
    SceneOracle,
    acquire_B_planes,
    acquire_dataset,
    acquire_planar,
    reconstruct_A0,
    reconstruct_B,
    recover_Ainf_sum,
    recover_flux_mod,
    wrap_centered,
)
from kgscatter.kg_solver import convergence_study
from kgscatter.lineflux import angular_derivative_xray, field_moment, long_range_flux, long_range_flux_from_ainf, xray
from kgscatter.potentials import (
    GaussianBumpField,
    GaussianElectric,
    GaussianGauge,
    GaugeTransformedPotential,
    InversePowerElectric,
    SphereFunction,
    SumElectric,
    SumPotential,
    TailGauge,
    make_ab_torus_potential,
    make_coulomb_potential,
    make_longrange_potential,
)
from kgscatter.scene import builtin

TORUS = Torus((0.0, 0.0, 0.0), (0.0, 0.0, 1.0), 2.0, 0.5)
F_ODD = SphereFunction(linear=(0.3, -0.2, 0.1))
F_EVEN = SphereFunction(quadratic=((0.2, 0.1, 0.0), (0.1, -0.1, 0.05), (0.0, 0.05, -0.1)))
F_MIXED = SphereFunction(const=0.4, linear=(-0.1, 0.25, 0.2), quadratic=((0.1, 0.0, 0.1), (0.0, 0.2, 0.0), (0.1, 0.0, -0.3)),
                         cubic_xyz=0.5)


def random_unit(rng):
    return unit(rng.normal(size=3))


def random_scene(rng):
    """Random mix of a compact field, a long-range tail and two electric terms."""
    B = GaussianBumpField(center=tuple(rng.normal(size=3) * 0.5), direction=tuple(random_unit(rng)),
                          amplitude=float(rng.uniform(0.2, 1.5)), width=float(rng.uniform(0.5, 1.2)))
    f = SphereFunction(linear=tuple(rng.normal(size=3) * 0.3), cubic_xyz=float(rng.normal() * 0.3))
    A = SumPotential([make_coulomb_potential(B, method="analytic"), make_longrange_potential(f)[0]])
    A0 = SumElectric([
        GaussianElectric(float(rng.normal()), tuple(rng.normal(size=3) * 0.5), float(rng.uniform(0.5, 1.5))),
        InversePowerElectric(float(rng.normal() * 0.5), float(rng.uniform(2.0, 4.0)), float(rng.uniform(0.5, 2.0))),
    ])
    return A, A0


def test_criterion_1_decoupling_identity(report):
    t0 = time.time()
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(20):
        A, A0 = random_scene(rng)
        for _ in range(3):
            line = LineQuery(rng.normal(size=3) * 1.5, random_unit(rng))
            p = hm_phase(A, A0, line, tol=1e-12)
            worst = max(worst, abs(p.int_A - xray(A, None, line, tol=1e-12).int_A),
                        abs(p.int_A0 - xray(None, A0, line, tol=1e-12).int_A0))
    dt = time.time() - t0
    ok = worst < 1e-10 and dt < 60
    assert report(1, ok, f"max decoupling residual {worst:.2e} (tol 1e-10) over 20 scenes, {dt:.1f}s")


def test_criterion_2_gauge_covariance(report):
    t0 = time.time()
    rng = np.random.default_rng(202)
    B = GaussianBumpField(center=(0.2, -0.1, 0.0), direction=(0.3, 0.1, 1.0), amplitude=0.8, width=0.9)
    A = make_coulomb_potential(B, method="analytic")
    A0 = GaussianElectric(0.6, (0.0, 0.3, 0.0), 1.0)
    gauges = [TailGauge(F_ODD), TailGauge(F_EVEN), TailGauge(F_MIXED, r0=1.5),
              GaussianGauge(0.7, (0.5, 0.0, 0.2), 0.8), GaussianGauge(-1.3, (-0.4, 0.6, 0.0), 1.4)]
    worst = 0.0
    nonzero = 0
    for g in gauges:
        Ag = GaugeTransformedPotential(A, g)
        for _ in range(4):
            v = random_unit(rng)
            line = LineQuery(rng.normal(size=3), v)
            lhs = hm_phase(Ag, A0, line)
            rhs = gauge_transform_S(hm_phase(A, A0, line), g.lambda_inf, v)
            worst = max(worst, abs(lhs.theta_plus - rhs.theta_plus), abs(lhs.theta_minus - rhs.theta_minus))
            nonzero += abs(float(g.lambda_inf(v) - g.lambda_inf(-v))) > 1e-3
    dt = time.time() - t0
    ok = worst < 1e-6 and nonzero > 0 and dt < 300
    assert report(2, ok, f"max |S(A+grad l) - transformed S(A)| = {worst:.2e} (tol 1e-6), "
                         f"5 gauges, {nonzero} lines with nonzero limit difference, {dt:.1f}s")


def test_criterion_3_flux_mod_two_pi(report):
    t0 = time.time()
    obs = Obstacle((TORUS,))
    s = np.linspace(-3.5, 3.5, 8)
    worst, worst_alias = 0.0, 0.0
    data = {}
    for phi in (np.pi / 3, np.pi, 2 * np.pi, 2 * np.pi + np.pi / 3):
        A = make_ab_torus_potential(obs, 0, phi)
        for d_i, nu in enumerate(([0, 0, 1], [0.3, -0.2, 1.0])):
            ds = acquire_dataset(SceneOracle(A), nu, s, s, obstacle=obs, classify=True, wrapped=True)
            got = recover_flux_mod(ds, (1,), (0,))
            worst = max(worst, abs(float(wrap_centered(got - phi))))
            data[(phi, d_i)] = ds.theta_plus
    for d_i in range(2):
        a, b = data[(np.pi / 3, d_i)], data[(2 * np.pi + np.pi / 3, d_i)]
        ok_mask = ~np.isnan(a)
        worst_alias = max(worst_alias, float(np.max(np.abs(wrap_centered(a[ok_mask] - b[ok_mask])))))
    dt = time.time() - t0
    ok = worst < 1e-5 and worst_alias < 1e-5 and dt < 300
    assert report(3, ok, f"flux mod 2pi error {worst:.2e}, phase data difference for flux vs flux+2pi "
                         f"{worst_alias:.2e} (tol 1e-5), {dt:.1f}s")


def test_criterion_4_long_range_flux(report):
    t0 = time.time()
    dirs = [unit(d) for d in ([1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 0], [0.3, -0.5, 0.8], [-0.6, 0.2, 0.4])]
    worst_an, worst_ainf = 0.0, 0.0
    for f in (F_ODD, F_EVEN, F_MIXED):
        A, _ = make_longrange_potential(f)
        for v in dirs:
            arc = long_range_flux(A, v)
            worst_an = max(worst_an, abs(arc - float(f(v) - f(-v))))
            worst_ainf = max(worst_ainf, abs(arc - long_range_flux_from_ainf(A, v, use_analytic=False)))
    dt = time.time() - t0
    ok = worst_an < 1e-4 and worst_ainf < 1e-4 and dt < 300
    assert report(4, ok, f"arc limit vs gauge-limit difference {worst_an:.2e}, vs A_inf half-circle integral "
                         f"{worst_ainf:.2e} (tol 1e-4), 3 x 6 cases, {dt:.1f}s")


def test_criterion_5_ainf_sum(report):
    t0 = time.time()
    A, _ = make_longrange_potential(F_MIXED)
    oracle = SceneOracle(A)
    rng = np.random.default_rng(505)
    worst = 0.0
    for _ in range(12):
        v = random_unit(rng)
        got = recover_Ainf_sum(oracle, v)
        truth = F_MIXED.tangential_grad(v) + F_MIXED.tangential_grad(-v)
        worst = max(worst, float(np.max(np.abs(got - truth))))
    dt = time.time() - t0
    ok = worst < 1e-3 and dt < 600
    assert report(5, ok, f"max |recovered - analytic A_inf(v) + A_inf(-v)| = {worst:.2e} (tol 1e-3), "
                         f"12 directions, {dt:.1f}s")


def test_criterion_6_angular_derivative_identity(report):
    t0 = time.time()
    B = GaussianBumpField(center=(0.3, 0.0, -0.2), direction=(0.2, 1.0, 0.4), amplitude=0.9, width=0.8)
    tail, _ = make_longrange_potential(F_MIXED)
    A = SumPotential([make_coulomb_potential(B, method="analytic"), tail])
    rng = np.random.default_rng(606)
    worst = 0.0
    for _ in range(8):
        v = random_unit(rng)
        w = unit(np.cross(v, random_unit(rng)))
        x = rng.normal(size=3) * 0.8
        lhs = angular_derivative_xray(A, x, v, w).value
        ainf = A.a_inf_analytic(np.array([v, -v]))
        rhs = field_moment(B, x, v, w) + float((ainf[0] + ainf[1]) @ w)
        worst = max(worst, abs(lhs - rhs))
    dt = time.time() - t0
    ok = worst < 1e-3 and dt < 600
    assert report(6, ok, f"max |d/dtheta int A - (moment of B + A_inf sum term)| = {worst:.2e} (tol 1e-3), "
                         f"{dt:.1f}s")


def test_criterion_7_field_reconstruction(report):
    t0 = time.time()
    E = GaussianElectric(1.0, (0.2, -0.1, 0.0), 0.7)
    ds = acquire_planar(SceneOracle(None, E), np.zeros(3), [1, 0, 0], [0, 1, 0], n_ang=64, n_off=128, half_width=4.0)
    g = reconstruct_A0(ds, tile_half=2.0, n_tile=64, truth=E)
    a0_err = g.rel_l2_error()
    B = GaussianBumpField(center=(0.1, -0.2, 0.05), direction=(0.3, 0.4, 1.0), amplitude=1.0, width=0.8)
    A = make_coulomb_potential(B, method="analytic")
    y = np.array([0.2, -0.1, 0.1])
    planes = acquire_B_planes(SceneOracle(A), y, n_ang=64, n_off=96, half_width=3.0)
    Bv, grids = reconstruct_B(planes, tile_half=2.0, n_tile=64, truth=B)
    Bt = B(y[None])[0]
    comp = np.abs(Bv - Bt) / np.abs(Bt)
    tiles = [gr.rel_l2_error() for gr in grids]
    dt = time.time() - t0
    ok = a0_err <= 0.05 and np.max(comp) <= 0.10 and max(tiles) <= 0.10 and dt < 600
    assert report(7, ok, f"A0 rel L2 {a0_err:.3%} (<= 5%); B componentwise rel err "
                         f"{', '.join(f'{c:.2%}' for c in comp)}, tile rel L2 {', '.join(f'{t:.2%}' for t in tiles)} "
                         f"(<= 10%), {dt:.1f}s")


def test_criterion_8_solver_convergence(report):
    t0 = time.time()
    cfg = builtin("inverse_power")
    s = cfg.solver
    scfg = solver_config(cfg, threads=None)
    run = convergence_study(cfg.slab_scene(), float(s["impact"]), s["v_list"], scfg,
                            resolution_check_v=min(s["v_list"]))
    fit, rc = run.fit, run.resolution_check
    dt = time.time() - t0
    lo, hi = s["slope_band"]
    errs = ", ".join(f"v={r['v']:g}: {r['abs_err']:.3e}" for r in run.rows)
    ok = (not fit.degenerate and lo <= fit.slope <= hi and rc["ratio"] < 0.1 and scfg.grid.n >= 512
          and dt <= 1800)
    slope = "undefined" if fit.degenerate else f"{fit.slope:.3f} (95% CI [{fit.ci_low:.3f}, {fit.ci_high:.3f}])"
    assert report(8, ok, f"log-log slope {slope} in [{lo}, {hi}]; errors {errs}; grid doubling changes the phase "
                         f"by {rc['ratio']:.1%} of the v-error (< 10%); {scfg.grid.n}^2 grid, {dt:.0f}s")


def test_criterion_9_linking_labels(report):
    t0 = time.time()
    obs = Obstacle((TORUS, Torus((4.5, 0.0, 0.0), (1.0, 0.0, 0.0), 1.5, 0.4)), collar=0.1)
    rng = np.random.default_rng(909)
    worst_res, mismatches, n_lines, n_linked = 0.0, 0, 0, 0
    while n_lines < 50:
        # half of the lines are aimed at a torus hole, the rest anywhere near the obstacle
        if n_lines % 2 == 0:
            t = obs.tori[(n_lines // 2) % 2]
            v = unit(t.a + 0.3 * rng.normal(size=3))
            x = t.c + rng.uniform(-1.0, 1.0, size=3) * 0.5 * (t.major_radius - t.minor_radius)
        else:
            v = random_unit(rng)
            x = rng.uniform(-1, 1, size=3) * np.array([4.0, 3.0, 3.0]) + np.array([1.5, 0.0, 0.0])
        x = x - np.dot(x, v) * v
        if obs.line_distance(x, v) <= obs.collar:
            continue
        line = LineQuery(x, v)
        R0 = default_closure_radius(obs, line)
        labels = []
        for R in (R0, 2 * R0, 5 * R0):
            vals = np.array(curve_linking(closure_curve(obs, line, R), obs, n=1024))
            worst_res = max(worst_res, float(np.max(np.abs(vals - np.round(vals)))))
            labels.append(tuple(np.round(vals).astype(int)))
        mismatches += len(set(labels)) > 1
        n_linked += any(labels[0])
        n_lines += 1
    dt = time.time() - t0
    ok = worst_res < 1e-3 and mismatches == 0 and dt < 120
    assert report(9, ok, f"max |label - round(label)| = {worst_res:.2e} (tol 1e-3); {mismatches} of 50 lines change "
                         f"label over R0, 2R0, 5R0 ({n_linked} lines linked); {dt:.1f}s")


def test_criterion_10_determinism(report, tmp_path):
    cfg = builtin("ab_torus", seed=7)
    a, b = tmp_path / "a", tmp_path / "b"
    os.makedirs(a)
    os.makedirs(b)
    files = forward(cfg, str(a))
    forward(cfg, str(b))
    csvs = [f for f in files if f.endswith(".csv")]
    same = [filecmp.cmp(a / f, b / f, shallow=False) for f in csvs]
    ok = bool(csvs) and all(same)
    assert report(10, ok, f"{sum(same)}/{len(csvs)} CSVs byte-identical across repeated forward runs ({', '.join(csvs)})")


if __name__ == "__main__":  # pragma: no cover
    import sys

    sys.exit(pytest.main([__file__, "-v"]))
