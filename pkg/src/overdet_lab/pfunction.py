"""Identities behind the stability proof.

N = 2: the field X = 2 <x, grad u> grad u - |grad u|^2 x is divergence free
away from the pole, which turns into boundary identities for u_nu.  N = 3:
P = |grad u|^2 / u^4 on the centred ball, where everything is closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_legendre

from .geometry import WHOLE, distance_field, point_in_polygon
from .singular import OMEGA_3, SingularSolution, analytic_ball_N3


@dataclass
class IdentityResiduals:
    flux_square_identity: float
    deficit_relation: float
    divergence_interior: float
    p_max_principle_gap: float = float("nan")
    flux_square_lhs: float = float("nan")
    flux_square_rhs: float = float("nan")
    deficit_lhs: float = float("nan")
    deficit_rhs_exact: float = float("nan")
    deficit_rhs_display: float = float("nan")
    n_divergence_points: int = 0


def _divergence_samples(solution: SingularSolution, spacing: float | None = None):
    mesh = solution.mesh
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    diam = float(np.linalg.norm(hi - lo))
    spacing = spacing or diam / 24.0
    xs = np.arange(lo[0], hi[0] + spacing, spacing)
    ys = np.arange(lo[1], hi[1] + spacing, spacing)
    pts = np.array([(x, y) for x in xs for y in ys])
    s = 0.5 * mesh.h
    keep_from = 2.0 * mesh.h + s
    d_bdry = distance_field(pts, mesh, WHOLE)
    rho = np.linalg.norm(pts - np.asarray(solution.site), axis=1)

    poly = mesh.vertices[mesh.edges_of(WHOLE)[:, 0]]
    inside = np.array([point_in_polygon(p, poly) for p in pts])
    # a fixed exclusion disk around the pole keeps the stencil error from growing under refinement
    mask = inside & (d_bdry >= keep_from) & (rho >= max(keep_from, diam / 12.0))
    return pts[mask], s


def _x_field(solution: SingularSolution, pts: np.ndarray) -> np.ndarray:
    x = pts - np.asarray(solution.site)
    g = solution.grad_u(pts)
    xg = np.einsum("ij,ij->i", x, g)
    return 2.0 * xg[:, None] * g - np.einsum("ij,ij->i", g, g)[:, None] * x


def x_field_divergence(solution: SingularSolution, spacing: float | None = None) -> tuple[float, int]:
    """Max of |div X| / (|X| / rho) over interior lattice points, centred differences at h/2."""
    pts, s = _divergence_samples(solution, spacing)
    if len(pts) == 0:
        return float("nan"), 0
    ex = np.array([s, 0.0])
    ey = np.array([0.0, s])
    div = ((_x_field(solution, pts + ex)[:, 0] - _x_field(solution, pts - ex)[:, 0])
           + (_x_field(solution, pts + ey)[:, 1] - _x_field(solution, pts - ey)[:, 1])) / (2.0 * s)
    X = _x_field(solution, pts)
    rho = np.linalg.norm(pts - np.asarray(solution.site), axis=1)
    scale = np.linalg.norm(X, axis=1) / rho
    return float(np.max(np.abs(div) / scale)), len(pts)


def x_field_identities_2d(solution: SingularSolution) -> IdentityResiduals:
    """Boundary identities of the divergence-free field X, plus an interior divergence check.

    ``deficit_relation`` compares int (u_nu^2 - 1) <x, nu> dS with
    2|Omega|((1 + D)^2 - 1); both it and ``flux_square_identity`` are
    normalised by |dOmega|^2 / (2 pi), the natural scale of the identity.
    """
    from .functionals import isoperimetric_deficit

    mesh = solution.mesh
    u_nu = solution.boundary_normal_derivative()
    _, _, length, normal, mid = mesh.edge_geometry(WHOLE)
    support = np.einsum("ij,ij->i", mid - np.asarray(solution.site), normal)
    P = solution.total_boundary_measure
    scale = P * P / (2.0 * math.pi)
    lhs = float(np.sum(u_nu ** 2 * support * length))
    area = mesh.area
    D = isoperimetric_deficit(mesh)
    d_lhs = float(np.sum((u_nu ** 2 - 1.0) * support * length))
    d_rhs = 2.0 * area * ((1.0 + D) ** 2 - 1.0)
    div, npts = x_field_divergence(solution)
    return IdentityResiduals(
        flux_square_identity=abs(lhs - scale) / scale,
        deficit_relation=abs(d_lhs - d_rhs) / scale,
        divergence_interior=div,
        flux_square_lhs=lhs,
        flux_square_rhs=scale,
        deficit_lhs=d_lhs,
        deficit_rhs_exact=d_rhs,
        deficit_rhs_display=2.0 * area * D,
        n_divergence_points=npts,
    )


def _ball_integral_of_P(ball, n: int = 64) -> float:
    x, w = roots_legendre(n)
    rho = 0.5 * ball.R * (x + 1.0)
    return float(0.5 * ball.R * np.sum(w * 4.0 * math.pi * rho ** 2 * ball.P(rho)))


def p_ball_checks_N3(R: float, c: float | None = None, n_grid: int = 200) -> dict:
    """Residuals of the N = 3 P-function identities on B_R.

    With ``c`` left as None the boundary constant of the stability proof is
    used, which makes P constant.  Any c > 0 still satisfies the integral
    identity int_B P = (1/3) c^-3 |dB|.
    """
    N = 3
    sol = analytic_ball_N3(R, report_c_choice=c is None, c=c)
    ball = sol["ball"]
    rho = R * (np.arange(1, n_grid + 1) / n_grid)
    P = ball.P(rho)
    p0 = sol["P0"]
    lhs = _ball_integral_of_P(ball)
    rhs = (N - 2) / N * ball.c ** (-N / (N - 2)) * ball.boundary_measure
    return {
        "p_constant_gap": float(np.max(np.abs(P - p0))),
        "p_max_principle_gap": float(np.max(P) - p0),
        "integral_identity_gap": abs(lhs - rhs) / abs(rhs),
        "integral_P": lhs,
        "integral_rhs": rhs,
        "P0": p0,
        "c": ball.c,
    }


def ball_chain_N3(R: float) -> dict:
    """Both sides of the intermediate identity of the N = 3 proof on B_R (D = 0, M = 1)."""
    N = 3
    sol = analytic_ball_N3(R)
    ball = sol["ball"]
    vol = 4.0 / 3.0 * math.pi * R ** 3
    bm = ball.boundary_measure
    mean_gap = sol["P0"] - _ball_integral_of_P(ball) / vol
    D = bm / (N * (4.0 * math.pi / 3.0) ** (1 / N) * vol ** ((N - 1) / N)) - 1.0
    M = ball.M
    lhs = (bm / ((N - 2) ** (N - 1) * OMEGA_3)) ** (2 / (N - 2)) * mean_gap + D
    rhs = (1.0 + D) * (1.0 - (1.0 + D) ** (1 / (N - 1)) / M ** (N / (N - 1)))
    pre = ((N - 2) ** (N - 1) * OMEGA_3 / bm) ** (2 / (N - 2)) * (
        1.0 - (1.0 + D) ** (N / (N - 1)) * M ** (-N / (N - 1)))
    return {"D": D, "M": M, "intermedia_gap": abs(lhs - rhs), "mean_gap_identity": abs(mean_gap - pre)}


def scalar_estimate_holds(D: float, M: float, N: int) -> tuple[float, float]:
    """(lhs, rhs) of 1 - (1 + D)^(1/(N-1)) / M^(N/(N-1)) <= 2 (M - 1)."""
    lhs = 1.0 - (1.0 + D) ** (1.0 / (N - 1)) / M ** (N / (N - 1))
    return lhs, 2.0 * (M - 1.0)


def _row(name, lhs, rhs):
    return {"name": name, "lhs": float(lhs), "rhs": float(rhs), "margin": float(rhs - lhs), "passed": bool(lhs <= rhs)}


def chain_inequality_audit(report, N: int = 2, slack: float = 0.1) -> list[dict]:
    """Evaluate each scalar inequality of the stability chain at the measured (D, M).

    ``report`` is a FunctionalReport or a mapping with ``M`` and ``deficit_D``.
    Discretisation slack multiplies the right-hand sides that compare a
    mesh-measured quantity with an exact one.
    """
    if isinstance(report, dict):
        M, D = report["M"], report["deficit_D"]
        F = report.get("asymmetry_F")
    else:
        M, D, F = report.M, report.deficit_D, report.asymmetry_F
    rows = [_row("gate_M_minus_1_le_quarter", M - 1.0, 0.25)]
    lhs, rhs = scalar_estimate_holds(D, M, N)
    rows.append(_row("scalar_estimate", lhs, rhs))
    if N == 2:
        rows.append(_row("deficit_le_M2_minus_1", D, (M * M - 1.0) * (1.0 + slack)))
        rows.append(_row("M2_minus_1_le_2M_M_minus_1", M * M - 1.0, 2.0 * M * (M - 1.0)))
        rows.append(_row("deficit_le_5_2_M_minus_1", D, 2.5 * (M - 1.0) * (1.0 + slack)))
    elif N == 3:
        rows.append(_row("deficit_le_4_M_minus_1", D, 4.0 * (M - 1.0) * (1.0 + slack)))
    else:
        raise ValueError("chain audit is defined for N in {2, 3}")
    if F is not None:
        unit_ball = math.pi if N == 2 else 4.0 * math.pi / 3.0
        rows.append(_row("trivial_bound_F_le_2B1", F, 2.0 * unit_ball))
    return rows
