"""Polygonal domains, triangulation and boundary measures.

Domains are closed counterclockwise polylines whose edges carry a part label
(``Gamma0``, ``Gamma1`` or ``Whole``).  Meshes are produced with Shewchuk's
Triangle through the ``triangle`` bindings; the input boundary vertices are
kept as the first mesh vertices, in order, so boundary data can be read off
by index.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import triangle

GAMMA0 = "Gamma0"
GAMMA1 = "Gamma1"
WHOLE = "Whole"
LABELS = (GAMMA0, GAMMA1, WHOLE)


class GeometryError(ValueError):
    """Raised for invalid domains, meshes or labels."""


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def signed_area(points: np.ndarray) -> float:
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def point_in_polygon(point, polygon: np.ndarray) -> bool:
    """Even-odd rule; points exactly on the boundary count as outside."""
    x, y = float(point[0]), float(point[1])
    a = polygon
    b = np.roll(polygon, -1, axis=0)
    if np.any(_point_segment_distance(np.array([[x, y]]), a, b) < 1e-14):
        return False
    cond = (a[:, 1] > y) != (b[:, 1] > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = a[:, 0] + (y - a[:, 1]) * (b[:, 0] - a[:, 0]) / (b[:, 1] - a[:, 1])
    return bool(np.count_nonzero(cond & (x < xint)) % 2)


def _point_segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each point to each segment, shape (n_points, n_segments)."""
    d = b - a
    len2 = np.einsum("ij,ij->i", d, d)
    rel = points[:, None, :] - a[None, :, :]
    t = np.einsum("pij,ij->pi", rel, d) / np.where(len2 > 0, len2, 1.0)
    t = np.clip(t, 0.0, 1.0)
    proj = a[None, :, :] + t[:, :, None] * d[None, :, :]
    return np.linalg.norm(points[:, None, :] - proj, axis=2)


def _brute_distance(points, a, b, chunk):
    out = np.empty(len(points))
    for start in range(0, len(points), chunk):
        block = points[start:start + chunk]
        out[start:start + chunk] = _point_segment_distance(block, a, b).min(axis=1)
    return out


def distance_to_segments(points: np.ndarray, a: np.ndarray, b: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Minimum Euclidean distance from each point to a union of segments.

    Large queries go through a k-d tree on segment midpoints: a segment of
    length L at distance d has its midpoint within d + L/2, so candidates are
    exact whenever the k-th nearest midpoint lies beyond best + L_max/2;
    points failing that certificate fall back to the brute-force scan.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(points) * len(a) <= 200_000 or len(a) <= 64:
        return _brute_distance(points, a, b, chunk)
    from scipy.spatial import cKDTree

    tree = cKDTree(0.5 * (a + b))
    half = 0.5 * float(np.max(np.linalg.norm(b - a, axis=1)))
    out = np.empty(len(points))
    todo = np.arange(len(points))
    for k in (8, 64):
        dk, idx = tree.query(points[todo], k=k)
        rel = points[todo][:, None, :] - a[idx]
        d = b[idx] - a[idx]
        len2 = np.einsum("pkj,pkj->pk", d, d)
        t = np.clip(np.einsum("pkj,pkj->pk", rel, d) / np.where(len2 > 0, len2, 1.0), 0.0, 1.0)
        best = np.linalg.norm(rel - t[..., None] * d, axis=2).min(axis=1)
        ok = dk[:, -1] > best + half
        out[todo[ok]] = best[ok]
        todo = todo[~ok]
        if not len(todo):
            return out
    out[todo] = _brute_distance(points[todo], a, b, chunk)
    return out


@dataclass(frozen=True)
class PolygonalDomain:
    boundary_vertices: np.ndarray
    part_labels: tuple[str, ...]
    origin: tuple[float, float] | None = None
    cone_vertex: tuple[float, float] | None = None
    name: str = "polygon"

    def __post_init__(self):
        pts = np.asarray(self.boundary_vertices, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
            raise GeometryError("boundary needs at least 3 two-dimensional vertices")
        if len(self.part_labels) != len(pts):
            raise GeometryError("every edge needs exactly one label")
        for lab in self.part_labels:
            if lab not in LABELS:
                raise GeometryError(f"unknown part label {lab!r}")
        pts.setflags(write=False)
        object.__setattr__(self, "boundary_vertices", pts)
        object.__setattr__(self, "part_labels", tuple(self.part_labels))
        if signed_area(pts) <= 0:
            raise GeometryError("boundary must be counterclockwise with positive area")
        if not _is_simple(pts):
            raise GeometryError("boundary polyline self-intersects")
        if self.origin is not None and not point_in_polygon(self.origin, pts):
            raise GeometryError("origin marker must lie strictly inside the domain")
        if self.cone_vertex is not None:
            a, b = self.edges_of(GAMMA1)
            if len(a) == 0 or distance_to_segments([self.cone_vertex], a, b)[0] > 1e-12:
                raise GeometryError("cone vertex must lie on the Gamma1 part")

    @property
    def n_edges(self) -> int:
        return len(self.boundary_vertices)

    def edges_of(self, label: str) -> tuple[np.ndarray, np.ndarray]:
        pts = self.boundary_vertices
        nxt = np.roll(pts, -1, axis=0)
        mask = _label_mask(self.part_labels, label)
        return pts[mask], nxt[mask]

    @property
    def area(self) -> float:
        return signed_area(self.boundary_vertices)

    @property
    def perimeter(self) -> float:
        d = np.roll(self.boundary_vertices, -1, axis=0) - self.boundary_vertices
        return float(np.linalg.norm(d, axis=1).sum())

    def translated(self, shift) -> "PolygonalDomain":
        s = np.asarray(shift, dtype=float)
        move = lambda p: None if p is None else tuple(np.asarray(p) + s)
        return PolygonalDomain(self.boundary_vertices + s, self.part_labels,
                               move(self.origin), move(self.cone_vertex), self.name)

    def scaled(self, factor: float) -> "PolygonalDomain":
        mul = lambda p: None if p is None else tuple(np.asarray(p) * factor)
        return PolygonalDomain(self.boundary_vertices * factor, self.part_labels,
                               mul(self.origin), mul(self.cone_vertex), self.name)

    def rotated(self, angle: float) -> "PolygonalDomain":
        c, s = math.cos(angle), math.sin(angle)
        rot = np.array([[c, -s], [s, c]])
        r = lambda p: None if p is None else tuple(rot @ np.asarray(p))
        return PolygonalDomain(self.boundary_vertices @ rot.T, self.part_labels,
                               r(self.origin), r(self.cone_vertex), self.name)


def _label_mask(labels, label: str) -> np.ndarray:
    if label not in LABELS:
        raise GeometryError(f"unknown part label {label!r}")
    labels = np.asarray(labels)
    if label == WHOLE:
        return np.ones(len(labels), dtype=bool)
    return labels == label


def _is_simple(pts: np.ndarray) -> bool:
    n = len(pts)
    a = pts
    b = np.roll(pts, -1, axis=0)
    # bounding-box prefilter keeps the pairwise test cheap for a few hundred edges
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    overlap = ((lo[:, None, 0] <= hi[None, :, 0]) & (lo[None, :, 0] <= hi[:, None, 0])
               & (lo[:, None, 1] <= hi[None, :, 1]) & (lo[None, :, 1] <= hi[:, None, 1]))
    idx = np.arange(n)
    adjacent = (np.abs(idx[:, None] - idx[None, :]) <= 1) | (np.abs(idx[:, None] - idx[None, :]) == n - 1)
    cand = np.argwhere(np.triu(overlap & ~adjacent, 1))
    for i, j in cand:
        if _segments_cross(a[i], b[i], a[j], b[j]):
            return False
    return True


def build_fourier_domain(base_radius: float, cosine_coeffs=(), sine_coeffs=(),
                         n_boundary: int = 256, center=(0.0, 0.0)) -> PolygonalDomain:
    """Star-shaped domain r(t) = R (1 + sum a_k cos kt + sum b_k sin kt) around ``center``.

    The coefficient lists start at k = 1.  The Dirac site (origin marker) is
    placed at ``center``.
    """
    if n_boundary < 16:
        raise GeometryError("n_boundary must be at least 16")
    if base_radius <= 0:
        raise GeometryError("base_radius must be positive")
    t = 2.0 * np.pi * np.arange(n_boundary) / n_boundary
    rho = np.ones_like(t)
    for k, a in enumerate(cosine_coeffs, start=1):
        rho += a * np.cos(k * t)
    for k, b in enumerate(sine_coeffs, start=1):
        rho += b * np.sin(k * t)
    # check positivity on a fine grid as well, not only at the samples
    tf = np.linspace(0.0, 2.0 * np.pi, 16 * n_boundary, endpoint=False)
    rf = np.ones_like(tf)
    for k, a in enumerate(cosine_coeffs, start=1):
        rf += a * np.cos(k * tf)
    for k, b in enumerate(sine_coeffs, start=1):
        rf += b * np.sin(k * tf)
    if rf.min() <= 0 or rho.min() <= 0:
        raise GeometryError(f"radius function is non-positive (min {min(rf.min(), rho.min()):.4g})")
    c = np.asarray(center, dtype=float)
    pts = c + base_radius * np.c_[rho * np.cos(t), rho * np.sin(t)]
    return PolygonalDomain(pts, (WHOLE,) * n_boundary, origin=tuple(c), name="fourier")


def build_ellipse_domain(a: float, b: float, n_boundary: int = 256) -> PolygonalDomain:
    if a <= 0 or b <= 0 or n_boundary < 16:
        raise GeometryError("ellipse needs positive semi-axes and n_boundary >= 16")
    t = 2.0 * np.pi * np.arange(n_boundary) / n_boundary
    pts = np.c_[a * np.cos(t), b * np.sin(t)]
    return PolygonalDomain(pts, (WHOLE,) * n_boundary, origin=(0.0, 0.0), name="ellipse")


def build_rectangle_domain(width: float = 1.0, height: float = 1.0, labels=None,
                           n_per_side: int = 1) -> PolygonalDomain:
    """Axis-aligned rectangle with corner at (0, 0); sides ordered bottom, right, top, left."""
    corners = np.array([[0.0, 0.0], [width, 0.0], [width, height], [0.0, height]])
    labels = labels or (WHOLE,) * 4
    pts, labs = [], []
    for s in range(4):
        p, q = corners[s], corners[(s + 1) % 4]
        for k in range(n_per_side):
            pts.append(p + (q - p) * k / n_per_side)
            labs.append(labels[s])
    center = (width / 2, height / 2)
    return PolygonalDomain(np.array(pts), tuple(labs), origin=center, name="rectangle")


def build_sector_domain(angle: float, radius: float, n_arc: int = 64, n_side: int = 32,
                        boundary_radius=None) -> PolygonalDomain:
    """Sector {0 < phi < angle, 0 < rho < radius} with apex at the origin.

    Arc edges are labelled Gamma0, radial sides Gamma1, and the apex is the
    cone-vertex marker.  ``boundary_radius`` (callable of phi) replaces the
    circular arc by another curve, e.g. an ellipse, for non-ball cases.
    """
    if not (0.0 < angle <= math.pi + 1e-15):
        raise GeometryError("sector angle must lie in (0, pi] for a convex cone")
    if radius <= 0:
        raise GeometryError("radius must be positive")
    if n_arc < 2 or n_side < 1:
        raise GeometryError("n_arc >= 2 and n_side >= 1 required")
    rfun = boundary_radius or (lambda phi: radius * np.ones_like(phi))
    phi = angle * np.arange(n_arc + 1) / n_arc
    rho_arc = np.asarray(rfun(phi), dtype=float)
    pts, labs = [], []
    r_first = rho_arc[0]
    # side along phi = 0, from the apex outward
    for k in range(n_side):
        pts.append([r_first * k / n_side, 0.0])
        labs.append(GAMMA1)
    for k in range(n_arc):
        pts.append([rho_arc[k] * math.cos(phi[k]), rho_arc[k] * math.sin(phi[k])])
        labs.append(GAMMA0)
    r_last = rho_arc[-1]
    d = np.array([math.cos(angle), math.sin(angle)])
    for k in range(n_side):
        pts.append(list(d * r_last * (n_side - k) / n_side))
        labs.append(GAMMA1)
    pts = np.array(pts)
    # the closing side (phi = angle) ends at the apex = pts[0]
    return PolygonalDomain(pts, tuple(labs), cone_vertex=(0.0, 0.0), name="sector")


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    edge_labels: tuple[str, ...]
    h: float
    origin_index: int | None = None
    apex_index: int | None = None
    domain: PolygonalDomain | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        for name in ("vertices", "triangles", "boundary_edges"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def triangle_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def area(self) -> float:
        return float(self.triangle_areas.sum())

    def edge_mask(self, label: str) -> np.ndarray:
        return _label_mask(self.edge_labels, label)

    def edges_of(self, label: str) -> np.ndarray:
        mask = self.edge_mask(label)
        if not mask.any():
            raise GeometryError(f"label {label!r} has no edges on this mesh")
        return self.boundary_edges[mask]

    def boundary_vertex_indices(self, label: str = WHOLE) -> np.ndarray:
        return np.unique(self.edges_of(label))

    def edge_geometry(self, label: str = WHOLE):
        """Start/end points, lengths, outward unit normals and midpoints of labelled edges."""
        e = self.edges_of(label)
        a = self.vertices[e[:, 0]]
        b = self.vertices[e[:, 1]]
        d = b - a
        length = np.linalg.norm(d, axis=1)
        # rotate the ccw tangent by -pi/2
        normal = np.c_[d[:, 1], -d[:, 0]] / length[:, None]
        return a, b, length, normal, 0.5 * (a + b)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.vertices).tobytes())
        h.update(np.ascontiguousarray(self.triangles).tobytes())
        return h.hexdigest()[:16]


def _subdivide(domain: PolygonalDomain, h_target: float):
    """Split boundary edges longer than 1.5 h_target; labels are inherited."""
    pts = domain.boundary_vertices
    nxt = np.roll(pts, -1, axis=0)
    out_pts, out_labels, src = [], [], []
    for i, (p, q, lab) in enumerate(zip(pts, nxt, domain.part_labels)):
        length = float(np.linalg.norm(q - p))
        k = 1 if length <= 1.5 * h_target else int(math.ceil(length / h_target))
        for j in range(k):
            out_pts.append(p + (q - p) * j / k)
            out_labels.append(lab)
            src.append(i)
    return np.array(out_pts), out_labels


def triangulate(domain: PolygonalDomain, h_target: float, min_angle: float = 30.0) -> Mesh:
    """Quality conforming triangulation with edge lengths near ``h_target``.

    Boundary edges longer than 1.5 h_target are split uniformly before
    meshing; no Steiner points are added on the boundary afterwards, so the
    boundary vertices of the mesh are exactly those of the (split) polygon.
    """
    pts0 = domain.boundary_vertices
    diam = float(np.max(np.linalg.norm(pts0[:, None] - pts0[None], axis=2)))
    if not (0.0 < h_target < diam):
        raise GeometryError(f"h_target={h_target} must be positive and below the diameter {diam:.4g}")
    bpts, blabels = _subdivide(domain, h_target)
    nb = len(bpts)
    a_min = np.linalg.norm(np.roll(bpts, -1, axis=0) - bpts, axis=1).min()
    if a_min < 1e-3 * h_target:
        raise GeometryError("boundary features far below h_target; refine the polygon or lower h_target")
    verts = [bpts]
    origin_index = None
    if domain.origin is not None:
        o = np.asarray(domain.origin, dtype=float)
        dist = distance_to_segments([o], bpts, np.roll(bpts, -1, axis=0))[0]
        if dist < 0.25 * h_target:
            raise GeometryError("origin marker too close to the boundary for this h_target")
        verts.append(o[None, :])
        origin_index = nb
    segs = np.c_[np.arange(nb), (np.arange(nb) + 1) % nb]
    max_area = h_target ** 2 * math.sqrt(3.0) / 4.0
    out = triangle.triangulate(
        {"vertices": np.vstack(verts), "segments": segs},
        f"pq{min_angle:g}a{max_area:.15f}YQ",
    )
    V = np.asarray(out["vertices"], dtype=float)
    T = np.asarray(out["triangles"], dtype=np.int64)
    if not np.allclose(V[:nb], bpts, rtol=0, atol=0):
        raise GeometryError("mesher moved boundary vertices")
    # Triangle emits ccw triangles; enforce it anyway
    p = V[T]
    cross = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    flip = cross < 0
    T[flip] = T[flip][:, [0, 2, 1]]
    if np.any(np.abs(cross) <= 1e-14 * h_target ** 2):
        raise GeometryError("degenerate triangle produced")
    apex_index = None
    if domain.cone_vertex is not None:
        d = np.linalg.norm(V - np.asarray(domain.cone_vertex), axis=1)
        apex_index = int(np.argmin(d))
        if d[apex_index] > 1e-12:
            raise GeometryError("cone vertex is not a mesh vertex")
    edges = np.ascontiguousarray(segs)
    e = np.r_[T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]]
    h = float(np.linalg.norm(V[e[:, 0]] - V[e[:, 1]], axis=1).max())
    return Mesh(V, T, edges, tuple(blabels), h, origin_index, apex_index, domain)


def boundary_measures(mesh: Mesh, label: str) -> dict:
    """Length and outward normals of the labelled boundary part, plus the mesh area."""
    _, _, length, normal, _ = mesh.edge_geometry(label)
    return {"length": float(length.sum()), "normals": normal, "area": mesh.area}


def distance_to_part(point, mesh: Mesh, label: str) -> float:
    e = mesh.edges_of(label)
    return float(distance_to_segments([point], mesh.vertices[e[:, 0]], mesh.vertices[e[:, 1]])[0])


def distance_field(points: np.ndarray, mesh: Mesh, label: str) -> np.ndarray:
    e = mesh.edges_of(label)
    return distance_to_segments(points, mesh.vertices[e[:, 0]], mesh.vertices[e[:, 1]])


# -- mesh text format ------------------------------------------------------

def write_mesh(mesh: Mesh, path) -> None:
    lines = [f"vertices {mesh.n_vertices}", f"triangles {len(mesh.triangles)}",
             f"bedges {len(mesh.boundary_edges)}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles]
    lines += [f"{i} {j} {lab}" for (i, j), lab in zip(mesh.boundary_edges, mesh.edge_labels)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    lines = Path(path).read_text().splitlines()
    try:
        nv = int(lines[0].split()[1])
        nt = int(lines[1].split()[1])
        nb = int(lines[2].split()[1])
    except (IndexError, ValueError) as exc:
        raise GeometryError(f"bad mesh header in {path}") from exc
    body = lines[3:]
    if len(body) < nv + nt + nb:
        raise GeometryError(f"mesh file {path} truncated")
    V = np.array([[float(t) for t in ln.split()] for ln in body[:nv]])
    T = np.array([[int(t) for t in ln.split()] for ln in body[nv:nv + nt]], dtype=np.int64)
    E, labs = [], []
    for ln in body[nv + nt:nv + nt + nb]:
        i, j, lab = ln.split()
        E.append((int(i), int(j)))
        labs.append(lab)
    E = np.array(E, dtype=np.int64)
    e = np.r_[T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]]
    h = float(np.linalg.norm(V[e[:, 0]] - V[e[:, 1]], axis=1).max())
    return Mesh(V, T, E, tuple(labs), h)
