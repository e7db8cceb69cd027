from __future__ import annotations

import math

import numpy as np
import pytest

from overdet_lab.assembly import (Interpolator, ScalarField, SolverError, WeightSpec, boundary_flux, flux_balance,
                                  load_vector, lumped_mass, mass_matrix, read_triplets, recovered_gradient,
                                  solve_dirichlet, solve_mixed_bvp, solve_spd, stiffness_matrix, triangle_weights,
                                  write_triplets)
from overdet_lab.geometry import GAMMA0, GAMMA1, WHOLE, GeometryError, build_sector_domain, triangulate


def test_stiffness_kernel_and_symmetry(square_mesh):
    K = stiffness_matrix(square_mesh)
    assert abs(K - K.T).max() < 1e-14
    assert np.max(np.abs(K @ np.ones(square_mesh.n_vertices))) < 1e-12


def test_linear_energy_exact(square_mesh):
    # int |grad x|^2 = area for P1 (linear functions are represented exactly)
    x = square_mesh.vertices[:, 0]
    assert x @ (stiffness_matrix(square_mesh) @ x) == pytest.approx(1.0, rel=1e-12)


def test_mass_integrates_quadratics(square_mesh):
    M = mass_matrix(square_mesh)
    one = np.ones(square_mesh.n_vertices)
    x = square_mesh.vertices[:, 0]
    assert one @ (M @ one) == pytest.approx(1.0, rel=1e-13)
    assert x @ (M @ x) == pytest.approx(1.0 / 3.0, rel=1e-13)  # exact: P1 products are quadratic
    assert lumped_mass(square_mesh).sum() == pytest.approx(1.0, rel=1e-13)


def test_zero_weight_equals_plain(square_mesh):
    K0 = stiffness_matrix(square_mesh)
    Kw = stiffness_matrix(square_mesh, WeightSpec(0.0, WHOLE))
    assert abs(K0 - Kw).max() == 0.0


def test_weights_bounded_by_distance(square_mesh):
    w = triangle_weights(square_mesh, WeightSpec(0.5, WHOLE))
    assert np.all(w > 0) and np.all(w <= 0.5 + 1e-12)


def test_weight_alpha_range():
    with pytest.raises(ValueError):
        WeightSpec(1.5)


def test_dirichlet_quadratic_converges():
    errs = []
    for h in (0.1, 0.05, 0.025):
        mesh = triangulate(build_sector_domain(math.pi, 1.0, n_arc=int(math.pi / h), n_side=int(1 / h)), h)
        exact = mesh.vertices[:, 0] ** 2 - mesh.vertices[:, 1] ** 2
        v = solve_dirichlet(mesh, exact, label=WHOLE)
        errs.append(np.max(np.abs(v.values - exact)))
    assert errs[2] < errs[0] / 8.0
    assert errs[2] < 1e-3


def test_torsion_flux_on_disk(disk_mesh):
    # Delta v = 2, v = 0: v = (r^2 - 1)/2 and v_nu = 1
    v = solve_dirichlet(disk_mesh, np.zeros(disk_mesh.n_vertices), WHOLE, source=2.0)
    exact = 0.5 * (np.sum(disk_mesh.vertices ** 2, axis=1) - 1.0)
    assert np.max(np.abs(v.values - exact)) < 1e-3
    flux = boundary_flux(v, WHOLE)
    assert np.max(np.abs(flux - 1.0)) < 5e-3
    total, source = flux_balance(v)
    assert total == pytest.approx(source, rel=1e-10)


def test_mixed_problem_natural_condition():
    mesh = triangulate(build_sector_domain(math.pi / 2, 1.0, n_arc=40, n_side=25), 0.04)
    u = solve_mixed_bvp(mesh, 2.0, (GAMMA0, 0.0), neumann_zero=GAMMA1)
    exact = 0.5 * (np.sum(mesh.vertices ** 2, axis=1) - 1.0)
    assert np.max(np.abs(u.values - exact)) < 2e-3
    assert np.all(boundary_flux(u, GAMMA1) == 0.0)


def test_mixed_labels_validated():
    mesh = triangulate(build_sector_domain(math.pi / 2, 1.0, n_arc=20, n_side=10), 0.08)
    with pytest.raises(GeometryError):
        solve_mixed_bvp(mesh, 0.0, (GAMMA0, 1.0), neumann_zero=GAMMA0)


def test_mean_zero_neumann_solve(square_mesh):
    # -Delta v = cos(pi x) pi^2 with natural BC: v = cos(pi x) up to a constant
    K = stiffness_matrix(square_mesh)
    M = mass_matrix(square_mesh)
    x = square_mesh.vertices[:, 0]
    f = math.pi ** 2 * np.cos(math.pi * x)
    m = lumped_mass(square_mesh)
    v = solve_spd(K, M @ f, mean_zero=True, mass=m)
    assert abs(m @ v) < 1e-10
    assert np.max(np.abs(v - np.cos(math.pi * x))) < 5e-3


def test_singular_system_reports_error(square_mesh):
    K = stiffness_matrix(square_mesh)
    with pytest.raises(SolverError):
        solve_spd(K, np.ones(square_mesh.n_vertices))


def test_load_vector_total(square_mesh):
    assert load_vector(square_mesh, 3.0).sum() == pytest.approx(3.0)


def test_triplets_round_trip(tmp_path, coarse_square_mesh):
    K = stiffness_matrix(coarse_square_mesh)
    write_triplets(K, tmp_path / "k.txt")
    assert abs(read_triplets(tmp_path / "k.txt") - K).max() == 0.0


def test_recovered_gradient_exact_for_linear(square_mesh):
    x, y = square_mesh.vertices.T
    f = ScalarField(square_mesh, 2.0 * x - 3.0 * y)
    g = recovered_gradient(f)
    assert np.allclose(g, [2.0, -3.0], atol=1e-12)


def test_interpolator(square_mesh):
    x, y = square_mesh.vertices.T
    it = Interpolator(square_mesh)
    pts = np.array([[0.3, 0.7], [0.9, 0.1]])
    assert np.allclose(it(x + 2 * y, pts), pts[:, 0] + 2 * pts[:, 1], atol=1e-12)
    with pytest.raises(ValueError):
        it(x, np.array([[2.0, 2.0]]))


def test_field_shape_checked(square_mesh):
    with pytest.raises(ValueError):
        ScalarField(square_mesh, np.zeros(3))
