"""Sector experiments: cone mean values, the mixed torsion duality, and the cone Poincaré bound.

A sector mesh has its apex x0 on the lateral sides Gamma1; Gamma0 is the
remaining (curved) part of the boundary.  Harmonic fields solve
Delta v = 0, v = f on Gamma0, v_nu = 0 on Gamma1; the torsion field solves
Delta u = N with u = 0 on Gamma0 and the same natural condition.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_legendre

from .assembly import Interpolator, ScalarField, boundary_flux, lumped_mass, mass_matrix, solve_mixed_bvp, stiffness_matrix
from .disk import linear_integral_over_disk
from .geometry import GAMMA0, GAMMA1, GeometryError, Mesh, build_sector_domain, distance_to_part, triangulate

N_DIM = 2
N_ARC_GAUSS = 128


def cone_angles(mesh: Mesh) -> tuple[float, float]:
    """Polar angles (phi_start, phi_end) of the two lateral sides at the apex."""
    if mesh.apex_index is None:
        raise GeometryError("mesh has no cone vertex")
    x0 = mesh.vertices[mesh.apex_index]
    e = mesh.boundary_edges
    out_edge = e[e[:, 0] == mesh.apex_index][0]
    in_edge = e[e[:, 1] == mesh.apex_index][0]
    d_out = mesh.vertices[out_edge[1]] - x0
    d_in = mesh.vertices[in_edge[0]] - x0
    a0 = math.atan2(d_out[1], d_out[0])
    a1 = math.atan2(d_in[1], d_in[0])
    while a1 <= a0:
        a1 += 2.0 * math.pi
    return a0, a1


def apex_gamma0_distance(mesh: Mesh) -> float:
    return distance_to_part(mesh.vertices[mesh.apex_index], mesh, GAMMA0)


def sector_mesh(angle: float, h: float, radius: float = 1.0, boundary_radius=None) -> Mesh:
    """Sector mesh whose boundary spacing is about h (no boundary subdivision by the mesher)."""
    n_arc = max(4, int(math.ceil(angle * radius / h)))
    n_side = max(2, int(math.ceil(radius / h)))
    dom = build_sector_domain(angle, radius, n_arc=n_arc, n_side=n_side, boundary_radius=boundary_radius)
    return triangulate(dom, h)


def solve_harmonic(mesh: Mesh, f) -> ScalarField:
    """Delta v = 0, v = f on Gamma0, v_nu = 0 on Gamma1."""
    return solve_mixed_bvp(mesh, 0.0, (GAMMA0, f), neumann_zero=GAMMA1)


def solve_torsion(mesh: Mesh) -> ScalarField:
    """Delta u = N, u = 0 on Gamma0, u_nu = 0 on Gamma1."""
    return solve_mixed_bvp(mesh, float(N_DIM), (GAMMA0, 0.0), neumann_zero=GAMMA1)


def solve_h_fields(mesh: Mesh, data: list) -> list[ScalarField]:
    """Solve the harmonic problem for a batch of Dirichlet data concurrently."""
    with ThreadPoolExecutor() as pool:
        return list(pool.map(lambda f: solve_harmonic(mesh, f), data))


def cap_mean(field: ScalarField, x0, r: float, interp: Interpolator | None = None) -> float:
    """Mean of the interpolated field over the arc {|x - x0| = r} inside the cone (Gauss-Legendre)."""
    mesh = field.mesh
    delta = apex_gamma0_distance(mesh)
    if not (0.0 < r < delta):
        raise ValueError(f"radius {r} outside (0, {delta:.6g})")
    a0, a1 = cone_angles(mesh)
    t, w = roots_legendre(N_ARC_GAUSS)
    phi = 0.5 * (a1 - a0) * (t + 1.0) + a0
    x0 = np.asarray(x0, dtype=float)
    pts = x0 + r * np.c_[np.cos(phi), np.sin(phi)]
    vals = (interp or Interpolator(mesh))(field.values, pts)
    return float(0.5 * np.sum(w * vals))


def analytic_cap_mean(fun, x0, r: float, a0: float, a1: float) -> float:
    """The same 128-point arc rule applied to a closed-form function of (n, 2) points."""
    t, w = roots_legendre(N_ARC_GAUSS)
    phi = 0.5 * (a1 - a0) * (t + 1.0) + a0
    pts = np.asarray(x0, dtype=float) + r * np.c_[np.cos(phi), np.sin(phi)]
    return float(0.5 * np.sum(w * fun(pts)))


def solid_mean(field: ScalarField, x0, r: float) -> float:
    """Mean over the sector ∩ B_r(x0) with exact triangle clipping."""
    total, area = linear_integral_over_disk(field.mesh, field.values, x0, r)
    return total / area


def default_radius_grid(mesh: Mesh, n: int = 10) -> list[float]:
    delta = apex_gamma0_distance(mesh)
    return [float(delta * k / (n + 1)) for k in range(1, n + 1)]


@dataclass
class ConeExperiment:
    mesh: Mesh
    v: ScalarField
    u: ScalarField
    radius_grid: list[float]
    psi: list[float] = field(default_factory=list)
    f_sup: float = 1.0
    duality: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mesh.apex_index is None:
            raise GeometryError("sector mesh must carry its apex as a vertex")
        delta = apex_gamma0_distance(self.mesh)
        if not all(0.0 < r < delta for r in self.radius_grid):
            raise ValueError("radius grid must lie inside (0, delta_Gamma0(x0))")

    @property
    def apex(self) -> np.ndarray:
        return self.mesh.vertices[self.mesh.apex_index]


def make_experiment(angle: float, h: float, f, radius: float = 1.0, boundary_radius=None,
                    n_radii: int = 10) -> ConeExperiment:
    mesh = sector_mesh(angle, h, radius, boundary_radius)
    v = solve_harmonic(mesh, f)
    u = solve_torsion(mesh)
    grid = default_radius_grid(mesh, n_radii)
    g0 = mesh.boundary_vertex_indices(GAMMA0)
    f_sup = float(np.max(np.abs(v.values[g0]))) or 1.0
    exp = ConeExperiment(mesh, v, u, grid, f_sup=f_sup)
    interp = Interpolator(mesh)
    exp.psi = [cap_mean(v, exp.apex, r, interp) for r in grid]
    return exp


def mean_value_residuals(experiment: ConeExperiment, radius_grid=None) -> dict:
    """Max deviations of the cap and solid means from the apex value over the radius grid."""
    grid = experiment.radius_grid if radius_grid is None else list(radius_grid)
    v, x0 = experiment.v, experiment.apex
    v0 = float(v.values[experiment.mesh.apex_index])
    interp = Interpolator(experiment.mesh)
    caps = [cap_mean(v, x0, r, interp) for r in grid]
    solids = [solid_mean(v, x0, r) for r in grid]
    return {
        "max_cap_dev": float(max(abs(c - v0) for c in caps)),
        "solid_mean_dev": float(max(abs(s - v0) for s in solids)),
        "apex_value": v0,
        "table": [{"r": r, "psi": c, "solid_mean": s} for r, c, s in zip(grid, caps, solids)],
    }


def _gamma0_edge_data(mesh: Mesh):
    e = mesh.edges_of(GAMMA0)
    length = np.linalg.norm(mesh.vertices[e[:, 1]] - mesh.vertices[e[:, 0]], axis=1)
    return e, length


def torsion_flux_balance(u: ScalarField) -> tuple[float, float]:
    """(int_Gamma0 u_nu dS, N |Sigma ∩ Omega|)."""
    _, length = _gamma0_edge_data(u.mesh)
    return float(boundary_flux(u, GAMMA0) @ length), N_DIM * u.mesh.area


def duality_check(experiment: ConeExperiment, h_fields: list[ScalarField]) -> dict:
    """Constancy of the torsion flux, mean matching of each h, and the integral identity for each h."""
    if not h_fields:
        raise ValueError("duality check needs at least one h field")
    mesh = experiment.mesh
    e, length = _gamma0_edge_data(mesh)
    g0_len = float(length.sum())
    vol = mesh.area
    flux = boundary_flux(experiment.u, GAMMA0)
    mean_flux = float(flux @ length) / g0_len
    uflux_dev = float((flux.max() - flux.min()) / mean_flux)
    lm = lumped_mass(mesh)
    match, ident = [], []
    for hf in h_fields:
        hv = hf.values
        edge_h = 0.5 * (hv[e[:, 0]] + hv[e[:, 1]])
        sup = float(np.max(np.abs(hv))) or 1.0
        vol_int = float(lm @ hv)
        g0_int = float(edge_h @ length)
        match.append(abs(vol_int / vol - g0_int / g0_len) / sup)
        lhs = vol_int - vol / g0_len * g0_int
        rhs = float(((flux / N_DIM - vol / g0_len) * edge_h) @ length)
        ident.append(abs(lhs - rhs) / (vol * sup))
    out = {"uflux_const_dev": uflux_dev, "mean_match_dev": match, "identity47_residual": ident,
           "mean_flux": mean_flux}
    experiment.duality = out
    return out


def cone_poincare_check(experiment: ConeExperiment) -> dict:
    """||v - v(x0)||_2 against (1 + |Sigma∩Omega|/|Sigma∩B_delta|)^(1/2) mu^-1 ||grad v||_2."""
    from .poincare import estimate_scalar_constant

    mesh, v = experiment.mesh, experiment.v
    d = v.values - v.values[mesh.apex_index]
    lhs = math.sqrt(max(float(d @ (mass_matrix(mesh) @ d)), 0.0))
    grad = math.sqrt(max(float(v.values @ (stiffness_matrix(mesh) @ v.values)), 0.0))
    delta = apex_gamma0_distance(mesh)
    _, cap_area = linear_integral_over_disk(mesh, np.ones(mesh.n_vertices), experiment.apex, delta)
    mu_inv = estimate_scalar_constant(mesh).constant
    rhs = math.sqrt(1.0 + mesh.area / cap_area) * mu_inv * grad
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
    return {"lhs": lhs, "rhs_bound": rhs, "ratio": ratio, "mu_inv": mu_inv}


# -- standard data on the sector ------------------------------------------------

def polar_harmonic(order: float, scale: float = 1.0):
    """rho^order cos(order phi): Neumann-compatible on sectors of angle pi k / order."""
    def f(pts):
        pts = np.atleast_2d(pts)
        rho = np.hypot(pts[:, 0], pts[:, 1])
        phi = np.arctan2(pts[:, 1], pts[:, 0])
        return scale * rho ** order * np.cos(order * phi)
    return f


def bump_on_gamma0(center_phi: float, width: float, amplitude: float = 1.0):
    """Smooth data supported in an angular window, vanishing near the ends of Gamma0."""
    def f(pts):
        pts = np.atleast_2d(pts)
        phi = np.arctan2(pts[:, 1], pts[:, 0])
        s = (phi - center_phi) / width
        out = np.zeros(len(pts))
        inside = np.abs(s) < 1.0
        out[inside] = amplitude * np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
        return out
    return f


def ellipse_radius(a: float, b: float):
    """Radius function of the ellipse x^2/a^2 + y^2/b^2 = 1 in polar angle."""
    def rfun(phi):
        phi = np.asarray(phi, dtype=float)
        return 1.0 / np.sqrt((np.cos(phi) / a) ** 2 + (np.sin(phi) / b) ** 2)
    return rfun
