"""Acceptance criteria 1-12, one test each, at the stated tolerances.

Every test records a one-line PASS/FAIL verdict with the measured numbers and
runtime; the lines are printed in the "acceptance criteria" summary section.
"""
from __future__ import annotations

import math
import time
from pathlib import Path

import numpy as np

import oracles
from conftest import ACCEPTANCE_LINES, n_around, trefoil_mesh
from overdet_lab.cli import main
from overdet_lab.cone import (analytic_cap_mean, bump_on_gamma0, cone_poincare_check, duality_check, ellipse_radius,
                              make_experiment, mean_value_residuals, polar_harmonic, solve_h_fields)
from overdet_lab.config import load_config
from overdet_lab.experiments import run_stability_sweep
from overdet_lab.functionals import fraenkel_asymmetry
from overdet_lab.geometry import WHOLE, build_ellipse_domain, build_fourier_domain, build_rectangle_domain, triangulate
from overdet_lab.pfunction import ball_chain_N3, chain_inequality_audit, p_ball_checks_N3, x_field_identities_2d
from overdet_lab.poincare import (dense_vector_constant, estimate_scalar_constant, estimate_vector_constant,
                                  inequality_audit_section3, zero_trace_scalar_constant)
from overdet_lab.singular import boundary_gradient_stats, solve_punctured

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
ELLIPSE = (1.2, 1.0 / 1.2)


def record(k: int, ok: bool, elapsed: float, limit: float | None, detail: str):
    within = limit is None or elapsed < limit
    verdict = "PASS" if ok and within else "FAIL"
    timing = f"{elapsed:.2f}s" + (f" (< {limit:g}s)" if limit is not None else "")
    ACCEPTANCE_LINES[k] = f"criterion {k:2d}: {verdict}  {timing}  {detail}"
    assert ok, ACCEPTANCE_LINES[k]
    assert within, ACCEPTANCE_LINES[k]


def ellipse_mesh(h):
    a, b = ELLIPSE
    return triangulate(build_ellipse_domain(a, b, n_boundary=n_around(math.pi * (a + b), h)), h)


def test_criterion_01_flux_normalization():
    t = time.perf_counter()
    stats = boundary_gradient_stats(solve_punctured(ellipse_mesh(0.02)))
    dt = time.perf_counter() - t
    dev = abs(stats["mean_flux"] - 1.0)
    record(1, dev <= 0.02, dt, 10, f"ellipse |mean flux - 1| = {dev:.3e} (tol 0.02)")


def test_criterion_02_rigidity_disk():
    t = time.perf_counter()
    mesh = triangulate(build_fourier_domain(1.0, n_boundary=n_around(2 * math.pi)), 0.02)
    sol = solve_punctured(mesh)
    m1 = boundary_gradient_stats(sol)["M"] - 1.0
    F = fraenkel_asymmetry(mesh).F
    corr = float(np.max(np.abs(sol.corrector.values)))
    dt = time.perf_counter() - t
    ok = m1 <= 0.02 and F <= 0.05 and corr <= 1e-9
    record(2, ok, dt, 10, f"disk M-1 = {m1:.3e}, F = {F:.3e}, corrector = {corr:.2e}")


def test_criterion_03_flux_square_identity():
    t = time.perf_counter()
    coarse = x_field_identities_2d(solve_punctured(ellipse_mesh(0.02))).flux_square_identity
    fine = x_field_identities_2d(solve_punctured(ellipse_mesh(0.01))).flux_square_identity
    dt = time.perf_counter() - t
    ok = coarse <= 0.03 and fine < coarse
    record(3, ok, dt, 30, f"ellipse residual {coarse:.3e} (h=0.02) -> {fine:.3e} (h=0.01)")


def test_criterion_04_stability_chain():
    t = time.perf_counter()
    outcome = run_stability_sweep(load_config(CONFIGS / "trefoil_sweep.ini"))
    dt = time.perf_counter() - t
    rows = outcome.rows
    assert [r["eps"] for r in rows] == [0.02, 0.05, 0.1]
    gates = [r["M_minus_1"] <= 0.25 for r in rows]
    deficit = [r["D"] <= 2.5 * r["M_minus_1"] * 1.1 for r in rows]
    ratios = [r["ratio"] for r in rows]
    bounded = all(math.isfinite(x) for x in ratios)
    ok = all(gates) and all(deficit) and bounded
    detail = ("M-1 = " + ", ".join(f"{r['M_minus_1']:.4f}" for r in rows)
              + f"; gate {gates}; D <= 2.75(M-1) {deficit}; F/sqrt(M-1) = "
              + ", ".join(f"{x:.3f}" for x in ratios) + f" (max {max(ratios):.3f})")
    record(4, ok, dt, 60, detail)


def test_criterion_05_pfunction_n3():
    t = time.perf_counter()
    rng = np.random.default_rng(42)
    worst = 0.0
    for R in rng.uniform(0.2, 5.0, size=20):
        p = p_ball_checks_N3(float(R))
        ch = ball_chain_N3(float(R))
        worst = max(worst, p["p_constant_gap"] / p["P0"], p["integral_identity_gap"],
                    ch["intermedia_gap"], ch["mean_gap_identity"])
        for row in chain_inequality_audit({"M": ch["M"], "deficit_D": ch["D"]}, N=3):
            worst = max(worst, row["lhs"] - row["rhs"])
    dt = time.perf_counter() - t
    record(5, worst <= 1e-9, dt, 1, f"20 radii, worst residual / violation = {worst:.2e}")


def test_criterion_06_scalar_poincare():
    t0 = time.perf_counter()
    disk = estimate_scalar_constant(triangulate(build_fourier_domain(1.0, n_boundary=n_around(2 * math.pi)), 0.02))
    t_disk = time.perf_counter() - t0
    t1 = time.perf_counter()
    square = estimate_scalar_constant(triangulate(build_rectangle_domain(1.0, 1.0, n_per_side=50), 0.02))
    t_square = time.perf_counter() - t1
    d_dev = abs(disk.constant - 0.5436) / 0.5436
    s_dev = abs(square.constant - 1 / math.pi) * math.pi
    ok = d_dev <= 0.02 and s_dev <= 0.02 and t_square < 30
    record(6, ok, t_disk, 30, f"disk {disk.constant:.5f} ({d_dev:.2%} from 0.5436; Bessel 1/j'11 = "
                              f"{oracles.disk_neumann_constant():.5f}), square {square.constant:.5f} "
                              f"({s_dev:.2%} from 1/pi, {t_square:.2f}s)")


def test_criterion_07_vector_constant():
    t = time.perf_counter()
    coarse = triangulate(build_rectangle_domain(1.0, 1.0, n_per_side=8), 0.125)
    mid = coarse.edge_geometry(WHOLE)[4]
    A = (mid[:, 1] < 1e-12) | (mid[:, 0] < 1e-12)
    sparse = estimate_vector_constant(coarse, A).constant
    dense = dense_vector_constant(coarse, A)
    dense_dev = abs(sparse - dense) / dense
    rank1 = estimate_vector_constant(coarse, mid[:, 1] < 1e-12).constant
    scalar = zero_trace_scalar_constant(coarse, mid[:, 1] < 1e-12).constant
    rank_dev = abs(rank1 - scalar) / scalar
    fine = triangulate(build_rectangle_domain(1.0, 1.0, n_per_side=25), 0.04)
    fm = fine.edge_geometry(WHOLE)[4]
    chain = [estimate_vector_constant(fine, (fm[:, 1] < 1e-12) | ((fm[:, 0] < 1e-12) & (fm[:, 1] < f))).constant
             for f in (0.25, 0.5, 0.75, 1.0)]
    monotone = all(b <= a * (1 + 1e-12) for a, b in zip(chain, chain[1:]))
    dt = time.perf_counter() - t
    ok = dense_dev <= 1e-8 and rank_dev <= 1e-8 and monotone
    record(7, ok, dt, 60, f"sparse/dense {dense_dev:.1e}, rank-1/scalar {rank_dev:.1e}, nested A "
                          + " >= ".join(f"{c:.4f}" for c in chain))


def test_criterion_08_mean_swap_audit():
    mesh = trefoil_mesh(0.1)
    t = time.perf_counter()
    rows = inequality_audit_section3(mesh, trials=1000, seed=42)
    dt = time.perf_counter() - t
    swap = next(r for r in rows if r["check"] == "mean_swap")
    ok = swap["trials"] == 1000 and swap["violations"] == 0
    record(8, ok, dt, 10, f"1000 trials, {swap['violations']} violations, worst lhs/rhs {swap['worst_ratio']:.4f}")


def test_criterion_09_cone_mean_value():
    t = time.perf_counter()
    f = polar_harmonic(2)
    exact = abs(analytic_cap_mean(f, (0.0, 0.0), 0.5, 0.0, math.pi / 2))
    devs = []
    for h in (0.02, 0.01, 0.005):
        exp = make_experiment(math.pi / 2, h, f, n_radii=10)
        devs.append(mean_value_residuals(exp)["max_cap_dev"] / exp.f_sup)
    dt = time.perf_counter() - t
    halving = devs[1] <= devs[0] / 2 and devs[2] <= devs[1] / 2
    ok = devs[0] <= 0.02 and halving and exact <= 1e-10
    record(9, ok, dt, 30, "max |psi - v(x0)| / sup f = " + " -> ".join(f"{d:.2e}" for d in devs)
                          + f"; analytic quadrature {exact:.1e}")


def test_criterion_10_duality():
    t = time.perf_counter()
    ball = make_experiment(math.pi / 2, 0.02, polar_harmonic(2))
    out = duality_check(ball, solve_h_fields(ball.mesh, [1.0, polar_harmonic(2)]))
    ball_ok = out["uflux_const_dev"] <= 0.02 and max(out["mean_match_dev"]) <= 0.02
    other = make_experiment(math.pi / 2, 0.02, polar_harmonic(2), boundary_radius=ellipse_radius(1.3, 0.8))
    nb = duality_check(other, solve_h_fields(other.mesh, [1.0, polar_harmonic(2), bump_on_gamma0(0.7, 0.4)]))
    co_fail = nb["uflux_const_dev"] > 0.02 and max(nb["mean_match_dev"]) > 0.02
    ident = max(nb["identity47_residual"])
    dt = time.perf_counter() - t
    ok = ball_ok and co_fail and ident <= 0.02
    record(10, ok, dt, 60, f"ball: constancy {out['uflux_const_dev']:.2e}, mean-match {max(out['mean_match_dev']):.2e}; "
                           f"non-ball: identity {ident:.2e}, constancy {nb['uflux_const_dev']:.3f} and "
                           f"mean-match {max(nb['mean_match_dev']):.3f} co-fail={co_fail}")


def test_criterion_11_cone_poincare():
    t = time.perf_counter()
    ratios = []
    for angle, order in ((math.pi / 2, 2), (math.pi, 2)):
        exp = make_experiment(angle, 0.02, polar_harmonic(order))
        ratios.append(cone_poincare_check(exp)["ratio"])
    dt = time.perf_counter() - t
    record(11, max(ratios) <= 1.05, dt, 30, "lhs/rhs_bound = " + ", ".join(f"{r:.3f}" for r in ratios))


def test_criterion_12_determinism(tmp_path):
    t = time.perf_counter()
    same = {}
    for stem, text in (("audit", "[experiment]\nkind = inequality_audit\nseed = 42\n[domain]\ntype = fourier\n"
                                  "cos = 0, 0, 0.1\n[mesh]\nh = 0.08\n[sweep]\ntrials = 200\nalpha = 0.25\n"),
                       ("duality", "[experiment]\nkind = cone_duality\nseed = 7\n[domain]\ntype = sector\n"
                                   "angle = pi/2\nellipse_a = 1.3\nellipse_b = 0.8\n[mesh]\nh = 0.05\n"
                                   "[sweep]\ndata = one, harmonic, bump\n")):
        cfg = tmp_path / f"{stem}.ini"
        cfg.write_text(text)
        outs = [tmp_path / f"{stem}_{i}" for i in (1, 2)]
        for out in outs:
            assert main(["run", str(cfg), "-o", str(out)]) in (0, 1)
        same[stem] = (outs[0] / "results.csv").read_bytes() == (outs[1] / "results.csv").read_bytes()
    dt = time.perf_counter() - t
    record(12, all(same.values()), dt, None, "byte-identical results.csv across repeated runs: "
                                             + ", ".join(f"{k}={v}" for k, v in same.items()))
