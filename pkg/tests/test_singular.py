from __future__ import annotations

import csv
import math

import numpy as np
import pytest

import oracles
from overdet_lab.geometry import GeometryError, PolygonalDomain, WHOLE, build_fourier_domain, triangulate
from overdet_lab.singular import (BallN3, analytic_ball_N3, boundary_gradient_stats, c_star_N3, grad_phi_2d,
                                  phi_2d, solve_punctured, write_gradient_csv)


@pytest.fixture(scope="module")
def disk_solution(disk_mesh):
    return solve_punctured(disk_mesh)


def test_fundamental_solution_gradient_by_differences():
    p = np.array([[0.3, -0.4]])
    e = 1e-6
    fd = np.array([(phi_2d(p + [e, 0], (0, 0)) - phi_2d(p - [e, 0], (0, 0)))[0],
                   (phi_2d(p + [0, e], (0, 0)) - phi_2d(p - [0, e], (0, 0)))[0]]) / (2 * e)
    assert np.allclose(grad_phi_2d(p, (0, 0))[0], fd, rtol=1e-8)


def test_disk_corrector_is_constant(disk_solution):
    # on a regular polygon inscribed in the unit circle every boundary vertex has |x| = 1
    assert np.max(np.abs(disk_solution.corrector.values)) < 1e-9


def test_disk_solution_is_minus_log(disk_solution):
    pts = np.array([[0.5, 0.0], [0.1, 0.2], [-0.3, -0.6]])
    P = disk_solution.total_boundary_measure
    exact = -P / (2 * math.pi) * np.log(np.linalg.norm(pts, axis=1))
    assert np.allclose(disk_solution.u(pts), exact, atol=1e-9)


def test_disk_boundary_gradient(disk_solution):
    stats = boundary_gradient_stats(disk_solution)
    assert stats["M"] - 1.0 < 1e-3
    assert stats["mean_flux"] == pytest.approx(1.0, abs=1e-3)
    assert np.all(stats["u_nu"] < 0)


def test_ellipse_mean_flux_normalization(ellipse_mesh):
    stats = boundary_gradient_stats(solve_punctured(ellipse_mesh))
    assert abs(stats["mean_flux"] - 1.0) < 1e-3


@pytest.mark.parametrize("eps", [0.02, 0.1])
def test_trefoil_M_matches_trefftz(eps, trefoil_meshes):
    ref, ref_mean, fit = oracles.trefftz_boundary_gradient(*oracles.fourier_radius(eps))
    assert fit < 1e-8
    stats = boundary_gradient_stats(solve_punctured(trefoil_meshes[eps]))
    assert stats["M"] - 1.0 == pytest.approx(ref, abs=0.01)
    assert stats["mean_flux"] == pytest.approx(ref_mean, abs=1e-3)


def test_ellipse_M_matches_trefftz(ellipse_mesh):
    ref, _, _ = oracles.trefftz_boundary_gradient(*oracles.ellipse_radius_fn(1.2, 1 / 1.2))
    stats = boundary_gradient_stats(solve_punctured(ellipse_mesh))
    assert stats["M"] - 1.0 == pytest.approx(ref, abs=0.01)


def test_dirac_near_boundary_rejected():
    dom = build_fourier_domain(1.0, n_boundary=64, center=(0.0, 0.0)).translated((0.0, 0.0))
    near = PolygonalDomain(dom.boundary_vertices, dom.part_labels, origin=(0.97, 0.0))
    with pytest.raises(GeometryError):
        solve_punctured(triangulate(near, 0.1))


def test_gradient_csv(tmp_path, disk_solution):
    stats = boundary_gradient_stats(disk_solution)
    write_gradient_csv(stats, tmp_path / "g.csv")
    rows = list(csv.reader(open(tmp_path / "g.csv")))
    assert rows[0] == ["arclength", "x", "y", "flux"]
    assert len(rows) == 1 + len(disk_solution.mesh.edges_of(WHOLE))


def test_ball_n3_closed_form():
    ball = BallN3(2.0, 0.7)
    rho = np.array([0.5, 1.0, 2.0])
    # u solves -Delta u = 0 away from 0 and u(R) = c
    assert ball.u(2.0) == pytest.approx(0.7)
    assert np.allclose(ball.grad_norm(rho), 4.0 / rho ** 2)
    assert ball.boundary_measure == pytest.approx(16 * math.pi)


def test_c_star_makes_P_constant():
    for R in (0.3, 1.0, 4.0):
        sol = analytic_ball_N3(R)
        assert sol["c"] == pytest.approx(c_star_N3(R))
        rho = np.linspace(0.01, R, 50) * 1.0
        P = sol["ball"].P(rho)
        assert np.max(np.abs(P - sol["P0"])) < 1e-10 * sol["P0"]


def test_ball_rejects_bad_radius():
    with pytest.raises(ValueError):
        analytic_ball_N3(-1.0)
