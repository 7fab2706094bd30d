"""DOF-to-polynomial projection matrices for the lowest-order spaces (k = 0).

Concentration DOFs are edge averages of z.  Velocity DOFs are edge averages
of v.n with n the *global* edge normal.  Polynomial coefficients refer to the
scaled monomials [1, (x-xK)/hK, (y-yK)/hK] of the cell.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import PolyMesh


def _check_degree(k):
    if k != 0:
        raise NotImplementedError(f"only the lowest-order case k = 0 is implemented (got k = {k})")


def _cell_data(mesh: PolyMesh, K):
    e = mesh.cell_edges[K]
    s = mesh.cell_signs[K]
    length = mesh.edge_length[e]
    normal = mesh.edge_normal[e]
    return e, s, length, normal, mesh.edge_midpoint[e], mesh.area[K], mesh.centroid[K], mesh.diameter[K]


def grad_projector_concentration(mesh: PolyMesh, K, k=0):
    """(2, n_K) matrix: DOFs -> constant L2 projection of grad z.

    Integration by parts against constants leaves only the boundary term,
    (1/|K|) sum_e |e| zbar_e n_e.
    """
    _check_degree(k)
    _, s, length, normal, _, area, _, _ = _cell_data(mesh, K)
    return (s * length)[None, :] * normal.T / area


def elliptic_projector(mesh: PolyMesh, K, k=0):
    """(3, n_K) matrix: DOFs -> coefficients of the H1 projection onto P1.

    For linear targets the gradient part is the mean gradient; the constant
    is fixed by matching the boundary mean.
    """
    _check_degree(k)
    _, _, length, _, mid, _, xk, hk = _cell_data(mesh, K)
    G = grad_projector_concentration(mesh, K)
    perimeter = length.sum()
    xb = (length[:, None] * mid).sum(0) / perimeter
    P = np.empty((3, len(length)))
    P[0] = length / perimeter - (xb - xk) @ G
    P[1:] = hk * G
    return P


def l2_projector_concentration(mesh: PolyMesh, K, k=0):
    """(3, n_K) matrix for the L2 projection onto P1.

    On the enhanced space the P1 moments of z are defined to be those of its
    elliptic projection, so both matrices coincide.
    """
    return elliptic_projector(mesh, K, k)


def l2_projector_velocity(mesh: PolyMesh, K, k=0):
    """(2, n_K) matrix: velocity DOFs -> constant L2 projection of v."""
    _check_degree(k)
    _, s, length, _, mid, area, xk, _ = _cell_data(mesh, K)
    return ((s * length)[:, None] * (mid - xk)).T / area


def divergence(mesh: PolyMesh, K, dofs=None, k=0):
    """Constant divergence of a velocity in V_h(K).

    Returns the (n_K,) row operator, or its value on ``dofs`` if given.
    """
    _check_degree(k)
    _, s, length, _, _, area, _, _ = _cell_data(mesh, K)
    row = s * length / area
    return row if dofs is None else float(row @ np.asarray(dofs))


def monomial_dofs(mesh: PolyMesh, K):
    """(n_K, 3) concentration DOFs of the scaled monomials (midpoint values)."""
    _, _, _, _, mid, _, xk, hk = _cell_data(mesh, K)
    return np.column_stack([np.ones(len(mid)), (mid - xk) / hk])


def constant_velocity_dofs(mesh: PolyMesh, K):
    """(n_K, 2) velocity DOFs of the constant fields (1, 0) and (0, 1)."""
    return mesh.edge_normal[mesh.cell_edges[K]].copy()


@dataclass(frozen=True, eq=False)
class ProjectorSet:
    """All local projection matrices, zero padded to the largest cell.

    Arrays are indexed [cell, row, local edge]; padded columns are zero so
    that contractions over the edge axis need no masking.
    """

    elliptic: np.ndarray  # (nc, 3, m)
    grad: np.ndarray  # (nc, 2, m)
    velocity: np.ndarray  # (nc, 2, m)
    div: np.ndarray  # (nc, m)
    mono_dofs: np.ndarray  # (nc, m, 3)
    const_dofs: np.ndarray  # (nc, m, 2)
    mask: np.ndarray  # (nc, m)

    @property
    def l2_concentration(self):
        return self.elliptic

    @property
    def eye(self):
        """Identity on the DOFs of each cell, zero on padding."""
        m = self.mask.shape[1]
        return np.eye(m)[None, :, :] * (self.mask[:, :, None] & self.mask[:, None, :])


def build_projectors(mesh: PolyMesh, k=0) -> ProjectorSet:
    _check_degree(k)
    idx, sgn, mask = mesh.padded
    length = np.where(mask, mesh.edge_length[idx], 0.0)
    normal = mesh.edge_normal[idx] * mask[..., None]
    mid = mesh.edge_midpoint[idx]
    area = mesh.area[:, None]
    xk = mesh.centroid[:, None, :]
    hk = mesh.diameter[:, None, None]

    sl = sgn * length
    grad = np.transpose(sl[..., None] * normal, (0, 2, 1)) / area[..., None]
    perimeter = length.sum(1, keepdims=True)
    xb = (length[..., None] * mid).sum(1) / perimeter
    ell = np.empty((mesh.n_cells, 3, idx.shape[1]))
    ell[:, 0] = length / perimeter - np.einsum("ci,cij->cj", xb - mesh.centroid, grad)
    ell[:, 1:] = hk * grad
    vel = np.transpose(sl[..., None] * (mid - xk), (0, 2, 1)) / area[..., None]
    div = sl / area
    mono = np.concatenate([np.ones_like(length)[..., None], (mid - xk) / hk], axis=2) * mask[..., None]
    return ProjectorSet(ell, grad, vel * mask[:, None, :], div, mono, normal, mask)
