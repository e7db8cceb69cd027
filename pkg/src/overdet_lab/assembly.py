"""P1 finite elements: assembly, constrained SPD solves, mixed problems, flux recovery."""
from __future__ import annotations

import logging
import weakref
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import WHOLE, GeometryError, Mesh, distance_field

log = logging.getLogger(__name__)

DIRECT_LIMIT = 20_000
SOLVE_RTOL = 1e-10


class SolverError(RuntimeError):
    """Raised when a linear or eigen solve fails its contract."""


@dataclass(frozen=True)
class WeightSpec:
    alpha: float = 0.0
    part: str = WHOLE

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError(f"weight exponent alpha={self.alpha} outside [0, 1]")


@dataclass
class ScalarField:
    """Per-vertex P1 coefficients on a mesh.

    Fields produced by a solve also carry the nodal boundary residual used
    for variational flux recovery, and the labels on which the solve imposed
    Dirichlet data.
    """

    mesh: Mesh
    values: np.ndarray
    residual: np.ndarray | None = field(default=None, repr=False)
    dirichlet_labels: tuple[str, ...] = ()
    source: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_vertices,):
            raise ValueError("coefficient count must equal the vertex count")

    def integral(self) -> float:
        return float(lumped_mass(self.mesh) @ self.values)


# -- element geometry --------------------------------------------------------

def element_gradients(mesh: Mesh):
    """Gradients of the three hat functions per triangle, shape (nt, 3, 2), and areas."""
    p = mesh.vertices[mesh.triangles]
    x, y = p[..., 0], p[..., 1]
    area = 0.5 * ((x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0]))
    if np.any(area <= 0):
        raise GeometryError("degenerate or inverted triangle in mesh")
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    grads = np.stack([b, c], axis=2) / (2.0 * area)[:, None, None]
    return grads, area


def field_gradients(field: ScalarField) -> np.ndarray:
    grads, _ = element_gradients(field.mesh)
    return np.einsum("tij,ti->tj", grads, field.values[field.mesh.triangles])


_MIDPOINT_DISTANCE: dict = {}


def _edge_midpoint_distance(mesh: Mesh, part: str) -> np.ndarray:
    """Distance to ``part`` at the three edge midpoints of every triangle, cached per mesh."""
    key = (id(mesh), part)
    if key not in _MIDPOINT_DISTANCE:
        T = mesh.triangles
        local = np.stack([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]], axis=1).reshape(-1, 2)
        edges, inverse = np.unique(np.sort(local, axis=1), axis=0, return_inverse=True)
        mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
        d = distance_field(mids, mesh, part)
        _MIDPOINT_DISTANCE[key] = d[inverse.ravel()].reshape(-1, 3)
        weakref.finalize(mesh, _MIDPOINT_DISTANCE.pop, key, None)
    return _MIDPOINT_DISTANCE[key]


def triangle_weights(mesh: Mesh, weight: WeightSpec | None) -> np.ndarray:
    """Per-triangle mean of delta^(2 alpha) by the 3-point edge-midpoint rule."""
    if weight is None or weight.alpha == 0.0:
        return np.ones(len(mesh.triangles))
    d = _edge_midpoint_distance(mesh, weight.part)
    return np.mean(d ** (2.0 * weight.alpha), axis=1)


def _scatter(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    T = mesh.triangles
    rows = np.repeat(T, 3, axis=1).ravel()
    cols = np.tile(T, (1, 3)).ravel()
    n = mesh.n_vertices
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    return A


def stiffness_matrix(mesh: Mesh, weight: WeightSpec | None = None) -> sp.csr_matrix:
    grads, area = element_gradients(mesh)
    w = triangle_weights(mesh, weight)
    local = np.einsum("tik,tjk->tij", grads, grads) * (area * w)[:, None, None]
    return _scatter(mesh, local)


def mass_matrix(mesh: Mesh) -> sp.csr_matrix:
    _, area = element_gradients(mesh)
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    return _scatter(mesh, area[:, None, None] * ref[None])


def lumped_mass(mesh: Mesh) -> np.ndarray:
    _, area = element_gradients(mesh)
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, mesh.triangles.ravel(), np.repeat(area / 3.0, 3))
    return out


def boundary_mass_matrix(mesh: Mesh, label: str) -> sp.csr_matrix:
    e = mesh.edges_of(label)
    length = np.linalg.norm(mesh.vertices[e[:, 1]] - mesh.vertices[e[:, 0]], axis=1)
    rows = np.c_[e[:, 0], e[:, 0], e[:, 1], e[:, 1]].ravel()
    cols = np.c_[e[:, 0], e[:, 1], e[:, 0], e[:, 1]].ravel()
    vals = (length[:, None] * np.array([2.0, 1.0, 1.0, 2.0]) / 6.0).ravel()
    n = mesh.n_vertices
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def assemble(mesh: Mesh, weight: WeightSpec | None = None) -> dict:
    """Weighted stiffness, mass and a boundary-mass factory for a mesh."""
    return {
        "stiffness": stiffness_matrix(mesh, weight),
        "mass": mass_matrix(mesh),
        "boundary_mass": lambda label: boundary_mass_matrix(mesh, label),
    }


def load_vector(mesh: Mesh, source: float) -> np.ndarray:
    """Load for a constant source density: int source * phi_i."""
    return source * lumped_mass(mesh)


# -- solves ----------------------------------------------------------------

def _solve_matrix(A: sp.spmatrix, b: np.ndarray) -> np.ndarray:
    A = sp.csc_matrix(A)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    if A.shape[0] <= DIRECT_LIMIT:
        try:
            x = spla.splu(A, permc_spec="COLAMD").solve(b)
        except RuntimeError as exc:
            raise SolverError(f"singular constrained system: {exc}") from exc
    else:
        import pyamg

        if np.any(A.diagonal() <= 0):
            raise SolverError("operator is not positive definite")
        ml = pyamg.smoothed_aggregation_solver(sp.csr_matrix(A), symmetry="symmetric")
        x, info = spla.cg(A, b, rtol=SOLVE_RTOL * 1e-2, atol=0.0, maxiter=2000, M=ml.aspreconditioner(cycle="V"))
        if info != 0:
            res = np.linalg.norm(A @ x - b) / bnorm
            raise SolverError(f"CG did not converge (info={info}, relative residual {res:.3e})")
    if not np.all(np.isfinite(x)):
        raise SolverError("singular constrained system (non-finite solution)")
    res = np.linalg.norm(A @ x - b) / bnorm
    if res > SOLVE_RTOL:
        raise SolverError(f"relative residual {res:.3e} exceeds {SOLVE_RTOL:g}")
    return x


def solve_spd(operator: sp.spmatrix, rhs: np.ndarray, constraints=None,
              mean_zero: bool = False, mass: np.ndarray | None = None) -> np.ndarray:
    """Solve ``operator x = rhs`` with fixed values and/or a mean-zero constraint.

    ``constraints`` is a sequence of (index, value) pairs; the corresponding
    rows are eliminated.  With ``mean_zero`` the weighted mean (weights
    ``mass``, default uniform) is fixed to zero through a Lagrange multiplier,
    which also absorbs any incompatible part of the rhs of a Neumann operator.
    """
    A = sp.csr_matrix(operator)
    n = A.shape[0]
    b = np.asarray(rhs, dtype=float).copy()
    x = np.zeros(n)
    fixed = np.zeros(n, dtype=bool)
    if constraints:
        idx = np.array([int(i) for i, _ in constraints])
        vals = np.array([float(v) for _, v in constraints])
        x[idx] = vals
        fixed[idx] = True
    free = np.flatnonzero(~fixed)
    b_free = b[free] - A[free][:, fixed] @ x[fixed] if fixed.any() else b[free]
    A_ff = A[free][:, free]
    if mean_zero:
        w = np.ones(n) if mass is None else np.asarray(mass, dtype=float)
        w = w[free]
        K = sp.bmat([[A_ff, sp.csr_matrix(w[:, None])], [sp.csr_matrix(w[None, :]), None]], format="csc")
        sol = _solve_saddle(K, np.r_[b_free, 0.0])
        x[free] = sol[:-1]
    else:
        x[free] = _solve_matrix(A_ff, b_free)
    return x


def _solve_saddle(K: sp.spmatrix, b: np.ndarray) -> np.ndarray:
    try:
        x = spla.splu(sp.csc_matrix(K)).solve(b)
    except RuntimeError as exc:
        raise SolverError(f"singular constrained system: {exc}") from exc
    bnorm = np.linalg.norm(b) or 1.0
    if not np.all(np.isfinite(x)) or np.linalg.norm(K @ x - b) / bnorm > SOLVE_RTOL:
        raise SolverError("saddle-point solve failed")
    return x


def solve_dirichlet(mesh: Mesh, boundary_values: np.ndarray, label: str = WHOLE,
                    source: float = 0.0, weight: WeightSpec | None = None) -> ScalarField:
    """Delta v = source with v given at the vertices of ``label`` (natural condition elsewhere)."""
    K = stiffness_matrix(mesh, weight)
    load = load_vector(mesh, source)
    nodes = mesh.boundary_vertex_indices(label)
    vals = np.asarray(boundary_values, dtype=float)
    if vals.shape == (mesh.n_vertices,):
        vals = vals[nodes]
    # weak form of Delta v = s:  int grad v . grad phi = -int s phi + int v_nu phi
    x = solve_spd(K, -load, constraints=list(zip(nodes, vals)))
    residual = K @ x + load
    return ScalarField(mesh, x, residual, (label,), source)


def solve_mixed_bvp(mesh: Mesh, source: float, dirichlet, neumann_zero: str | None = None) -> ScalarField:
    """Solve Delta v = source, v = f on the Dirichlet part, v_nu = 0 on the Neumann part.

    ``dirichlet`` is ``(label, f)`` with ``f`` a callable of an (n, 2) array
    of points, or a scalar constant.
    """
    label, f = dirichlet
    if not mesh.edge_mask(label).any():
        raise GeometryError(f"Dirichlet part {label!r} is empty")
    if neumann_zero is not None:
        if neumann_zero == label or WHOLE in (label, neumann_zero):
            raise GeometryError("Dirichlet and Neumann labels must be disjoint")
        covered = mesh.edge_mask(label) | mesh.edge_mask(neumann_zero)
        if not covered.all():
            raise GeometryError("Dirichlet and Neumann labels must cover the boundary")
    nodes = mesh.boundary_vertex_indices(label)
    pts = mesh.vertices[nodes]
    vals = f(pts) if callable(f) else np.full(len(nodes), float(f))
    full = np.zeros(mesh.n_vertices)
    full[nodes] = vals
    return solve_dirichlet(mesh, full, label=label, source=source)


def boundary_flux(field: ScalarField, label: str) -> np.ndarray:
    """Edgewise outward normal derivative on ``label``, recovered variationally.

    On Dirichlet edges the nodal residual of the bulk form against boundary
    hat functions is inverted with the boundary mass of the Dirichlet part;
    natural (Neumann) edges carry zero flux.  Returns one value per edge of
    ``label`` in mesh order.
    """
    mesh = field.mesh
    if field.residual is None:
        raise ValueError("field carries no residual; it must come from a solve")
    edges = mesh.edges_of(label)
    dir_mask = np.zeros(len(mesh.boundary_edges), dtype=bool)
    for lab in field.dirichlet_labels:
        dir_mask |= mesh.edge_mask(lab)
    nodal = np.zeros(mesh.n_vertices)
    if dir_mask.any():
        de = mesh.boundary_edges[dir_mask]
        nodes = np.unique(de)
        length = np.linalg.norm(mesh.vertices[de[:, 1]] - mesh.vertices[de[:, 0]], axis=1)
        rows = np.c_[de[:, 0], de[:, 0], de[:, 1], de[:, 1]].ravel()
        cols = np.c_[de[:, 0], de[:, 1], de[:, 0], de[:, 1]].ravel()
        vals = (length[:, None] * np.array([2.0, 1.0, 1.0, 2.0]) / 6.0).ravel()
        n = mesh.n_vertices
        Mb = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()[nodes][:, nodes]
        nodal[nodes] = spla.spsolve(sp.csc_matrix(Mb), field.residual[nodes])
    flux = 0.5 * (nodal[edges[:, 0]] + nodal[edges[:, 1]])
    mask_in_label = mesh.edge_mask(label)
    flux[~dir_mask[mask_in_label]] = 0.0
    return flux


def flux_balance(field: ScalarField) -> tuple[float, float]:
    """(sum of flux * length over the boundary, integral of the source)."""
    _, _, length, _, _ = field.mesh.edge_geometry(WHOLE)
    total = float(boundary_flux(field, WHOLE) @ length)
    return total, field.source * field.mesh.area


def write_triplets(A: sp.spmatrix, path) -> None:
    """Upper-triangular (row, col, value) text dump for external cross-checks."""
    U = sp.triu(sp.coo_matrix(A))
    order = np.lexsort((U.col, U.row))
    with open(path, "w") as fh:
        fh.write(f"{A.shape[0]}\n")
        for i, j, v in zip(U.row[order], U.col[order], U.data[order]):
            fh.write(f"{i} {j} {v:.17g}\n")


def read_triplets(path) -> sp.csr_matrix:
    with open(path) as fh:
        n = int(fh.readline())
        data = np.loadtxt(fh, ndmin=2)
    i, j, v = data[:, 0].astype(int), data[:, 1].astype(int), data[:, 2]
    off = i != j
    rows = np.r_[i, j[off]]
    cols = np.r_[j, i[off]]
    return sp.coo_matrix((np.r_[v, v[off]], (rows, cols)), shape=(n, n)).tocsr()


def recovered_gradient(field: ScalarField) -> np.ndarray:
    """Nodal gradient by area-weighted averaging of the element gradients."""
    mesh = field.mesh
    g = field_gradients(field)
    _, area = element_gradients(mesh)
    acc = np.zeros((mesh.n_vertices, 2))
    wsum = np.zeros(mesh.n_vertices)
    for k in range(3):
        np.add.at(acc, mesh.triangles[:, k], g * area[:, None])
        np.add.at(wsum, mesh.triangles[:, k], area)
    return acc / wsum[:, None]


class Interpolator:
    """Piecewise-linear evaluation of nodal data at arbitrary points of a mesh."""

    def __init__(self, mesh: Mesh):
        import matplotlib.tri as mtri

        self.mesh = mesh
        self._tri = mtri.Triangulation(mesh.vertices[:, 0], mesh.vertices[:, 1], mesh.triangles)
        self._finder = self._tri.get_trifinder()

    def __call__(self, nodal: np.ndarray, points: np.ndarray) -> np.ndarray:
        import matplotlib.tri as mtri

        points = np.atleast_2d(points)
        interp = mtri.LinearTriInterpolator(self._tri, np.asarray(nodal, dtype=float), trifinder=self._finder)
        out = np.asarray(interp(points[:, 0], points[:, 1]).filled(np.nan))
        if np.any(np.isnan(out)):
            raise ValueError("evaluation point outside the mesh")
        return out
