"""Global DOF layout, interpolation into the discrete spaces, boundary handling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .mesh import PolyMesh
from .polybasis import MeshQuadrature, _gauss_legendre01, mesh_quadrature


@dataclass(frozen=True, eq=False)
class DofMap:
    """Lowest-order layout: one velocity and one concentration DOF per edge,
    one pressure DOF per cell, and one multiplier enforcing zero mean pressure.

    The coupled Darcy system is ordered [velocity | pressure | multiplier].
    """

    n_edges: int
    n_cells: int
    boundary: np.ndarray  # bool mask over velocity DOFs

    @classmethod
    def from_mesh(cls, mesh: PolyMesh):
        return cls(mesh.n_edges, mesh.n_cells, mesh.boundary_mask.copy())

    @property
    def n_velocity(self):
        return self.n_edges

    @property
    def n_pressure(self):
        return self.n_cells

    @property
    def n_concentration(self):
        return self.n_edges

    @property
    def pressure_offset(self):
        return self.n_edges

    @property
    def multiplier(self):
        return self.n_edges + self.n_cells

    @property
    def n_darcy(self):
        return self.n_edges + self.n_cells + 1


@dataclass(frozen=True)
class SolutionState:
    u: np.ndarray
    p: np.ndarray
    c: np.ndarray
    t: float


def _edge_points(mesh: PolyMesh, degree):
    t, w = _gauss_legendre01(max(1, -(-(degree + 1) // 2)))
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    return pts, w


def interpolate_velocity(mesh: PolyMesh, field, t=0.0, degree=6):
    """DOF_e = (1/|e|) int_e v.n_e with the global edge normal.

    ``field(x, y, t)`` returns the pair (v_x, v_y) for array arguments.
    """
    pts, w = _edge_points(mesh, degree)
    vx, vy = field(pts[..., 0], pts[..., 1], t)
    vn = np.broadcast_to(vx, pts.shape[:2]) * mesh.edge_normal[:, :1] + np.broadcast_to(
        vy, pts.shape[:2]
    ) * mesh.edge_normal[:, 1:]
    return vn @ w


def interpolate_concentration(mesh: PolyMesh, func, t=0.0, degree=6):
    """Edge averages of ``func(x, y, t)``."""
    pts, w = _edge_points(mesh, degree)
    vals = np.broadcast_to(func(pts[..., 0], pts[..., 1], t), pts.shape[:2])
    return vals @ w


def project_pressure(mesh: PolyMesh, func, t=0.0, quad: MeshQuadrature | None = None):
    """Cell means of ``func(x, y, t)`` with the area-weighted mean removed."""
    if quad is None:
        quad = mesh_quadrature(mesh, 6)
    vals = np.broadcast_to(func(quad.x, quad.y, t), quad.x.shape)
    means = quad.cell_sum(vals) / mesh.area
    return means - (means @ mesh.area) / mesh.area.sum()


def apply_velocity_bc(dofs: DofMap, matrix, rhs, values=None):
    """Impose the normal flux on boundary edges of the coupled Darcy system.

    Boundary rows and columns are zeroed and a unit diagonal inserted, which
    keeps the system symmetric.  ``values`` (one per boundary edge, in edge
    order) defaults to zero, the no-flow condition; nonzero values are
    lifted to the right-hand side before the columns are dropped.
    """
    n = matrix.shape[0]
    fixed = np.zeros(n, dtype=bool)
    fixed[: dofs.n_edges] = dofs.boundary
    matrix = sparse.csr_matrix(matrix)
    b = np.array(rhs, dtype=float, copy=True)
    g = np.zeros(n)
    if values is not None:
        g[fixed] = values
        b -= matrix @ g
    keep = sparse.diags((~fixed).astype(float))
    A = (keep @ matrix @ keep + sparse.diags(fixed.astype(float))).tocsr()
    b[fixed] = g[fixed]
    return A, b
