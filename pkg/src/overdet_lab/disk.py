"""Exact intersections of polygons and triangles with a disk.

Areas and first moments are accumulated edge by edge over the signed fan
triangles (center, a, b): each edge is cut at its intersections with the
circle, straight pieces inside the disk contribute a triangle with apex at
the center and pieces outside contribute a circular sector.
"""
from __future__ import annotations

import numpy as np


def fan_moments(a: np.ndarray, b: np.ndarray, center, r: float):
    """Signed area and first moments (about ``center``) of (center, a_i, b_i) ∩ disk.

    ``a`` and ``b`` have shape (..., 2).  Returns ``(area, mx, my)`` arrays.
    """
    c = np.asarray(center, dtype=float)
    A = np.asarray(a, dtype=float) - c
    B = np.asarray(b, dtype=float) - c
    D = B - A
    dd = np.einsum("...k,...k->...", D, D)
    ad = np.einsum("...k,...k->...", A, D)
    aa = np.einsum("...k,...k->...", A, A)
    disc = ad ** 2 - dd * (aa - r * r)
    has = (disc > 0) & (dd > 0)
    sq = np.sqrt(np.where(has, disc, 0.0))
    safe_dd = np.where(dd > 0, dd, 1.0)
    t1 = np.where(has, np.clip((-ad - sq) / safe_dd, 0.0, 1.0), 1.0)
    t2 = np.where(has, np.clip((-ad + sq) / safe_dd, 0.0, 1.0), 1.0)
    ts = np.stack([np.zeros_like(t1), t1, t2, np.ones_like(t1)], axis=-1)

    area = np.zeros(A.shape[:-1])
    mx = np.zeros_like(area)
    my = np.zeros_like(area)
    r3 = r ** 3 / 3.0
    for k in range(3):
        t0 = ts[..., k][..., None]
        t_1 = ts[..., k + 1][..., None]
        P = A + t0 * D
        Q = A + t_1 * D
        mid = 0.5 * (P + Q)
        inside = np.einsum("...k,...k->...", mid, mid) < r * r
        cross = P[..., 0] * Q[..., 1] - P[..., 1] * Q[..., 0]
        dot = np.einsum("...k,...k->...", P, Q)
        # straight piece inside the disk: triangle (0, P, Q)
        tri_area = 0.5 * cross
        tri_mx = tri_area * (P[..., 0] + Q[..., 0]) / 3.0
        tri_my = tri_area * (P[..., 1] + Q[..., 1]) / 3.0
        # piece outside: sector of the signed angle subtended by P, Q
        th0 = np.arctan2(P[..., 1], P[..., 0])
        dth = np.arctan2(cross, dot)
        th1 = th0 + dth
        sec_area = 0.5 * r * r * dth
        sec_mx = r3 * (np.sin(th1) - np.sin(th0))
        sec_my = r3 * (np.cos(th0) - np.cos(th1))
        area += np.where(inside, tri_area, sec_area)
        mx += np.where(inside, tri_mx, sec_mx)
        my += np.where(inside, tri_my, sec_my)
    return area, mx, my


def polygon_disk_area(polygon: np.ndarray, center, r: float) -> float:
    """Area of a counterclockwise simple polygon intersected with a disk."""
    a = np.asarray(polygon, dtype=float)
    area, _, _ = fan_moments(a, np.roll(a, -1, axis=0), center, r)
    return float(area.sum())


def triangle_disk_moments(tri_points: np.ndarray, center, r: float):
    """Per-triangle area and absolute first moments of T ∩ disk, for ccw triangles (nt, 3, 2)."""
    p = np.asarray(tri_points, dtype=float)
    a = p
    b = np.roll(p, -1, axis=1)
    area, mx, my = fan_moments(a, b, center, r)
    area = area.sum(axis=1)
    c = np.asarray(center, dtype=float)
    mx = mx.sum(axis=1) + c[0] * area
    my = my.sum(axis=1) + c[1] * area
    return area, mx, my


def mesh_disk_area(mesh, center, r: float) -> float:
    area, _, _ = triangle_disk_moments(mesh.vertices[mesh.triangles], center, r)
    return float(area.sum())


def linear_integral_over_disk(mesh, values: np.ndarray, center, r: float) -> tuple[float, float]:
    """Integral of a P1 field over mesh ∩ B_r(center) and the clipped area."""
    from .assembly import element_gradients

    tri = mesh.vertices[mesh.triangles]
    # cheap reject of triangles far from the disk
    c = np.asarray(center, dtype=float)
    dist = np.linalg.norm(tri - c, axis=2)
    near = dist.min(axis=1) <= r + np.linalg.norm(tri[:, 0] - tri[:, 1], axis=1) + np.linalg.norm(tri[:, 1] - tri[:, 2], axis=1)
    idx = np.flatnonzero(near)
    area, mx, my = triangle_disk_moments(tri[idx], c, r)
    grads, _ = element_gradients(mesh)
    vals = values[mesh.triangles[idx]]
    g = np.einsum("tij,ti->tj", grads[idx], vals)
    v0 = vals[:, 0] - np.einsum("tj,tj->t", g, tri[idx, 0])
    total = v0 * area + g[:, 0] * mx + g[:, 1] * my
    return float(total.sum()), float(area.sum())
