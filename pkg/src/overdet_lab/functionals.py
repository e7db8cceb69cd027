"""Shape functionals: isoperimetric deficit, Fraenkel and strong asymmetry, stability report."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize

from .disk import polygon_disk_area
from .geometry import WHOLE, GeometryError, Mesh, distance_to_segments

log = logging.getLogger(__name__)

STABILITY_SLACK = 0.1
SMALLNESS_GATE = 0.25


def _boundary_polygon(mesh: Mesh) -> np.ndarray:
    e = mesh.edges_of(WHOLE)
    # boundary edges are stored as one ccw loop: i -> i+1
    return mesh.vertices[e[:, 0]]


def isoperimetric_deficit(mesh: Mesh) -> float:
    """|dOmega| / (2 sqrt(pi |Omega|)) - 1 for a planar mesh."""
    _, _, length, _, _ = mesh.edge_geometry(WHOLE)
    return float(length.sum() / (2.0 * math.sqrt(math.pi * mesh.area)) - 1.0)


def _symmetric_difference(poly: np.ndarray, area: float, z, r: float) -> float:
    return area + math.pi * r * r - 2.0 * polygon_disk_area(poly, z, r)


@dataclass
class FraenkelResult:
    F: float
    z_star: tuple[float, float]
    r: float
    converged: bool = True
    starts: list = field(default_factory=list)


def fraenkel_asymmetry(mesh: Mesh, n_starts: int = 5, xtol: float = 1e-6) -> FraenkelResult:
    """min_z |Omega Δ B_r(z)| / r^2 with pi r^2 = |Omega|, by multistart Nelder-Mead.

    The intersection area |Omega ∩ B_r(z)| is evaluated exactly from the
    boundary loop (signed fan decomposition); it agrees with the sum of
    clipped mesh triangles to rounding.
    """
    poly = _boundary_polygon(mesh)
    area = mesh.area
    r = math.sqrt(area / math.pi)
    tri = mesh.vertices[mesh.triangles]
    tri_area = mesh.triangle_areas
    bary = (tri.mean(axis=1) * tri_area[:, None]).sum(axis=0) / tri_area.sum()
    offsets = [(0.0, 0.0), (0.1, 0.0), (-0.1, 0.0), (0.0, 0.1), (0.0, -0.1)]
    seeds = [bary + r * np.asarray(o) for o in offsets[:n_starts]]

    def objective(z):
        return _symmetric_difference(poly, area, z, r) / r ** 2

    best, runs = None, []
    for z0 in seeds:
        res = minimize(objective, z0, method="Nelder-Mead",
                       options={"xatol": xtol * r, "fatol": 1e-14, "maxiter": 4000,
                                "initial_simplex": np.array([z0, z0 + [0.05 * r, 0], z0 + [0, 0.05 * r]])})
        runs.append({"start": [float(z0[0]), float(z0[1])], "F": float(res.fun), "success": bool(res.success)})
        if best is None or res.fun < best.fun:
            best = res
    converged = any(run["success"] for run in runs)
    if not converged:
        log.warning("Fraenkel optimizer stagnated on every start; returning best value")
    return FraenkelResult(float(max(best.fun, 0.0)), (float(best.x[0]), float(best.x[1])), r, converged, runs)


def fraenkel_grid_search(mesh: Mesh, half_width: float | None = None, n: int = 101):
    """Brute-force oracle: dense grid over z around the barycenter, then local refinement."""
    poly = _boundary_polygon(mesh)
    area = mesh.area
    r = math.sqrt(area / math.pi)
    tri = mesh.vertices[mesh.triangles]
    w = mesh.triangle_areas
    bary = (tri.mean(axis=1) * w[:, None]).sum(axis=0) / w.sum()
    hw = 0.25 * r if half_width is None else half_width
    best_val, best_z = np.inf, bary
    for _ in range(4):
        xs = np.linspace(best_z[0] - hw, best_z[0] + hw, n)
        ys = np.linspace(best_z[1] - hw, best_z[1] + hw, n)
        for x in xs:
            for y in ys:
                val = _symmetric_difference(poly, area, (x, y), r) / r ** 2
                if val < best_val:
                    best_val, best_z = val, np.array([x, y])
        hw = 4.0 * hw / (n - 1)
        n = 21
    return float(best_val), (float(best_z[0]), float(best_z[1]))


def strong_asymmetry(mesh: Mesh, z, r: float) -> dict:
    """|Omega Δ B_r(z)|/r^2 + (1/r) int |nu_Omega - (x - z)/|x - z||^2 dS (edge midpoints)."""
    a, b, length, normal, mid = mesh.edge_geometry(WHOLE)
    z = np.asarray(z, dtype=float)
    if distance_to_segments([z], a, b)[0] < 1e-12:
        raise GeometryError("projection center lies on the boundary")
    poly = _boundary_polygon(mesh)
    volume_term = _symmetric_difference(poly, mesh.area, z, r) / r ** 2
    d = mid - z
    proj_normal = d / np.linalg.norm(d, axis=1)[:, None]
    normal_term = float(np.sum(np.sum((normal - proj_normal) ** 2, axis=1) * length)) / r
    return {"A": volume_term + normal_term, "volume_term": volume_term, "normal_term": normal_term}


@dataclass
class FunctionalReport:
    M: float
    M_minus_1: float
    mean_flux: float
    deficit_D: float
    asymmetry_F: float
    optimal_center_F: tuple[float, float]
    asymmetry_A: float
    identity_residuals: dict
    chain_verdicts: dict
    empirical_ratio: float
    fraenkel_converged: bool = True

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def stability_report(solution, slack: float = STABILITY_SLACK) -> FunctionalReport:
    """Evaluate M, D, F, A and the N = 2 proof chain for one punctured solve."""
    from .pfunction import chain_inequality_audit, x_field_identities_2d
    from .singular import boundary_gradient_stats

    mesh = solution.mesh
    stats = boundary_gradient_stats(solution)
    M = stats["M"]
    D = isoperimetric_deficit(mesh)
    fr = fraenkel_asymmetry(mesh)
    A = strong_asymmetry(mesh, fr.z_star, fr.r)["A"]
    ident = x_field_identities_2d(solution)
    m1 = M - 1.0
    ratio = fr.F / math.sqrt(m1) if m1 > 0 else float("nan")
    audit = chain_inequality_audit({"M": M, "deficit_D": D}, N=2, slack=slack)
    verdicts = {row["name"]: row for row in audit}
    return FunctionalReport(
        M=M, M_minus_1=m1, mean_flux=stats["mean_flux"], deficit_D=D, asymmetry_F=fr.F,
        optimal_center_F=fr.z_star, asymmetry_A=A, identity_residuals=asdict(ident),
        chain_verdicts=verdicts, empirical_ratio=ratio, fraenkel_converged=fr.converged,
    )
