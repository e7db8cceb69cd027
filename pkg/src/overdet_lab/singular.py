"""The punctured-domain problem -Laplace u = |dOmega| delta_0, u = c on the boundary.

In the plane the solution is split as u = |dOmega| Phi + w with the
fundamental solution Phi(x) = -log|x| / (2 pi) evaluated in closed form and a
harmonic P1 corrector w.  For N = 3 only the centred ball is handled, by
closed-form expressions.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .assembly import Interpolator, ScalarField, boundary_flux, recovered_gradient, solve_dirichlet
from .geometry import WHOLE, GeometryError, Mesh, distance_to_part


def phi_2d(points: np.ndarray, site) -> np.ndarray:
    r = np.linalg.norm(np.atleast_2d(points) - np.asarray(site), axis=1)
    return -np.log(r) / (2.0 * math.pi)


def grad_phi_2d(points: np.ndarray, site) -> np.ndarray:
    d = np.atleast_2d(points) - np.asarray(site)
    return -d / (2.0 * math.pi * np.einsum("ij,ij->i", d, d)[:, None])


@dataclass
class SingularSolution:
    mesh: Mesh
    corrector: ScalarField
    total_boundary_measure: float
    c: float
    site: tuple[float, float]
    dimension_N: int = 2

    def u(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        w = self._interp(self.corrector.values, points)
        return self.total_boundary_measure * phi_2d(points, self.site) + w

    def grad_u(self, points: np.ndarray) -> np.ndarray:
        """Closed-form singular gradient plus the interpolated recovered gradient of w."""
        points = np.atleast_2d(points)
        g = self._grad_w
        gw = np.c_[self._interp(g[:, 0], points), self._interp(g[:, 1], points)]
        return self.total_boundary_measure * grad_phi_2d(points, self.site) + gw

    @cached_property
    def _interp(self) -> Interpolator:
        return Interpolator(self.mesh)

    @cached_property
    def _grad_w(self) -> np.ndarray:
        return recovered_gradient(self.corrector)

    def boundary_normal_derivative(self) -> np.ndarray:
        """Signed u_nu per boundary edge (negative for the punctured problem)."""
        return self._edge_gradients()[1]

    def _edge_gradients(self):
        mesh = self.mesh
        a, b, length, normal, mid = mesh.edge_geometry(WHOLE)
        e = mesh.edges_of(WHOLE)
        tangent = (b - a) / length[:, None]
        sing = self.total_boundary_measure * grad_phi_2d(mid, self.site)
        w = self.corrector.values
        w_nu = boundary_flux(self.corrector, WHOLE)
        w_t = (w[e[:, 1]] - w[e[:, 0]]) / length
        grad = sing + w_nu[:, None] * normal + w_t[:, None] * tangent
        u_nu = np.einsum("ij,ij->i", grad, normal)
        return grad, u_nu, length, normal, mid


def solve_punctured(mesh: Mesh, c: float = 0.0) -> SingularSolution:
    """Split off the fundamental solution and solve for the harmonic corrector."""
    if mesh.origin_index is None:
        raise GeometryError("mesh has no Dirac site (origin marker)")
    site = tuple(mesh.vertices[mesh.origin_index])
    if distance_to_part(site, mesh, WHOLE) < 3.0 * mesh.h:
        raise GeometryError("Dirac site closer than 3h to the boundary; splitting unresolved")
    _, _, length, _, _ = mesh.edge_geometry(WHOLE)
    perimeter = float(length.sum())
    nodes = mesh.boundary_vertex_indices(WHOLE)
    data = np.zeros(mesh.n_vertices)
    data[nodes] = c - perimeter * phi_2d(mesh.vertices[nodes], site)
    w = solve_dirichlet(mesh, data, label=WHOLE)
    return SingularSolution(mesh, w, perimeter, float(c), site)


def boundary_gradient_stats(solution: SingularSolution) -> dict:
    """M = max |grad u| over boundary edges, the mean of |grad u|, and the per-edge table."""
    grad, u_nu, length, normal, mid = solution._edge_gradients()
    mag = np.linalg.norm(grad, axis=1)
    mean_flux = float(mag @ length / solution.total_boundary_measure)
    arclength = np.cumsum(length) - 0.5 * length
    per_edge = np.c_[arclength, mid, mag]
    return {"M": float(mag.max()), "mean_flux": mean_flux, "per_edge": per_edge, "u_nu": u_nu}


def write_gradient_csv(stats: dict, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["arclength", "x", "y", "flux"])
        for s, x, y, f in stats["per_edge"]:
            wr.writerow([f"{s:.12g}", f"{x:.12g}", f"{y:.12g}", f"{f:.12g}"])


# -- N = 3, centred ball ---------------------------------------------------------

OMEGA_3 = 4.0 * math.pi  # surface measure of the unit sphere in R^3


@dataclass(frozen=True)
class BallN3:
    R: float
    c: float

    @property
    def boundary_measure(self) -> float:
        return OMEGA_3 * self.R ** 2

    def u(self, rho):
        rho = np.asarray(rho, dtype=float)
        return self.R ** 2 / rho - self.R + self.c

    def grad_norm(self, rho):
        return self.R ** 2 / np.asarray(rho, dtype=float) ** 2

    def P(self, rho):
        # |grad u|^2 / u^(2(N-1)/(N-2)) with N = 3
        return self.grad_norm(rho) ** 2 / self.u(rho) ** 4

    @property
    def M(self) -> float:
        return 1.0

    @property
    def P0(self) -> float:
        N = 3
        return (N - 2) ** (2 * (N - 1) / (N - 2)) * (OMEGA_3 / self.boundary_measure) ** (2 / (N - 2))


def c_star_N3(R: float, M: float = 1.0) -> float:
    N = 3
    return M ** ((N - 2) / (N - 1)) / (N - 2) * (OMEGA_3 * R ** 2 / OMEGA_3) ** (1 / (N - 1))


def analytic_ball_N3(R: float, report_c_choice: bool = True, c: float | None = None) -> dict:
    """Closed-form solution on B_R in R^3 with the Dirac mass at the centre.

    With ``report_c_choice`` the boundary constant is the one making
    P(0) dominate P on the boundary; otherwise ``c`` (default 0 shift, i.e.
    c = R) is used.
    """
    if R <= 0:
        raise ValueError("R must be positive")
    cs = c_star_N3(R)
    if report_c_choice or c is None:
        c_used = cs
    else:
        c_used = float(c)
    ball = BallN3(float(R), c_used)

    def u_eval(x):
        return ball.u(np.linalg.norm(np.atleast_2d(x), axis=1))

    def p_eval(x):
        return ball.P(np.linalg.norm(np.atleast_2d(x), axis=1))

    return {"u": u_eval, "P": p_eval, "P0": ball.P0, "c_star": cs, "c": c_used, "ball": ball}
