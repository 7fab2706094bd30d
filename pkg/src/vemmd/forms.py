"""Local discrete bilinear forms and load vectors, batched over cells.

Every form returns an array indexed [cell, local row, local column] padded
to the largest cell, built from a :class:`ProjectorSet` and a mesh
quadrature.  Global DOF vectors are gathered through ``mesh.padded``; padded
slots pick up arbitrary values but always meet zero projector columns.

Stabilisations use the dofi-dofi form (I - D P)^T (I - D P), scaled by |K|
for the L2-type forms and unscaled for the H1-type dispersion form.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .mesh import PolyMesh
from .polybasis import MeshQuadrature, mesh_quadrature, scaled_monomials
from .projectors import ProjectorSet, build_projectors


@dataclass(frozen=True, eq=False)
class ElementData:
    """Mesh-dependent data shared by all forms."""

    mesh: PolyMesh
    proj: ProjectorSet
    quad: MeshQuadrature
    mono: np.ndarray  # (n_points, 3) scaled monomials at quadrature points

    @cached_property
    def concentration_stab(self):
        """(I - D P) per cell for the concentration space."""
        p = self.proj
        return p.eye - np.einsum("cia,caj->cij", p.mono_dofs, p.elliptic)

    @cached_property
    def velocity_stab(self):
        """(I - N Q) per cell for the velocity space."""
        p = self.proj
        return p.eye - np.einsum("cia,caj->cij", p.const_dofs, p.velocity)

    def gather(self, values):
        idx, _, _ = self.mesh.padded
        return np.asarray(values, dtype=float)[idx]

    def cell_coefficients(self, c):
        """Coefficients of Pi_1 c in the scaled monomials, shape (nc, 3)."""
        return np.einsum("caj,cj->ca", self.proj.elliptic, self.gather(c))

    def concentration_at_points(self, c):
        """Pi_1 c evaluated at the quadrature points."""
        return np.einsum("qa,qa->q", self.mono, self.cell_coefficients(c)[self.quad.cell])

    def cell_velocity(self, u):
        """Pi_0 u per cell, shape (nc, 2)."""
        return np.einsum("cdj,cj->cd", self.proj.velocity, self.gather(u))

    def weighted_gram(self, values):
        """int_K w m_a m_b for point values w, shape (nc, 3, 3)."""
        return self.quad.cell_sum(values[:, None, None] * self.mono[:, :, None] * self.mono[:, None, :])


def build_element_data(mesh: PolyMesh, degree=6) -> ElementData:
    quad = mesh_quadrature(mesh, degree)
    return ElementData(mesh, build_projectors(mesh), quad, scaled_monomials(mesh, quad, 1))


def dispersion_tensor(u, phi, d_m, d_l, d_t):
    """D(u) = phi [(d_m + d_t |u|) I + (d_l - d_t) u u^T / |u|] for u of shape (..., 2)."""
    u = np.asarray(u, dtype=float)
    r = np.linalg.norm(u, axis=-1)
    phi = np.asarray(phi, dtype=float)
    # below this |u| the tensor takes its continuous limit phi d_m I
    safe = r >= 1e-14
    uu = u[..., :, None] * u[..., None, :] / np.where(safe, r, 1.0)[..., None, None]
    uu = uu * safe[..., None, None]
    r = np.where(safe, r, 0.0)
    D = (d_m + d_t * r)[..., None, None] * np.eye(2) + (d_l - d_t) * uu
    return phi[..., None, None] * D


def _sandwich(P, H):
    return np.einsum("cai,cab,cbj->cij", P, H, P)


def _stab_form(S, nu):
    return nu[:, None, None] * np.einsum("cki,ckj->cij", S, S)


def local_mass(ed: ElementData, porosity):
    """M_K(c, z) = int phi Pi c Pi z + |phi_K| |K| s_K(c, z)."""
    phi = np.broadcast_to(porosity(ed.quad.x, ed.quad.y), ed.quad.x.shape)
    area = ed.mesh.area
    nu = np.abs(ed.quad.cell_sum(phi) / area) * area
    return _sandwich(ed.proj.elliptic, ed.weighted_gram(phi)) + _stab_form(ed.concentration_stab, nu)


def local_diffusion(ed: ElementData, u, porosity, d_m, d_l, d_t):
    """D_K(u; c, z) = int D(Pi_0 u) grad-proj c . grad-proj z + nu_D s_K(c, z).

    With Pi_0 u constant on K the tensor only varies through phi, so the
    consistency integral is D(Pi_0 u) evaluated with the cell integral of phi.
    """
    ubar = ed.cell_velocity(u)
    phi = np.broadcast_to(porosity(ed.quad.x, ed.quad.y), ed.quad.x.shape)
    phi_int = ed.quad.cell_sum(phi)
    Dint = dispersion_tensor(ubar, phi_int, d_m, d_l, d_t)
    G = ed.proj.grad
    cons = np.einsum("cai,cab,cbj->cij", G, Dint, G)
    speed = np.linalg.norm(ubar, axis=1)
    nu = np.abs(phi_int / ed.mesh.area) * (d_m + d_t * np.where(speed >= 1e-14, speed, 0.0))
    return cons + _stab_form(ed.concentration_stab, nu)


def local_convection(ed: ElementData, u, weight):
    """Theta_K(u; c, z) = 1/2 [(Pi_0 u . Pi_0 grad c, Pi z) + ((q+ + q-) Pi c, Pi z)
    - (Pi_0 u . Pi_0 grad z, Pi c)].

    ``weight`` holds q+ + q- at the quadrature points.  The first and last
    terms are exact transposes of each other, so the skew part vanishes on
    the symmetric diagonal.
    """
    ubar = ed.cell_velocity(u)
    P = ed.proj.elliptic
    ug = np.einsum("cd,cdj->cj", ubar, ed.proj.grad)  # Pi_0 u . G, per DOF
    mean = ed.mesh.area[:, None] * P[:, 0, :]  # int_K Pi z
    T1 = mean[:, :, None] * ug[:, None, :]
    T2 = _sandwich(P, ed.weighted_gram(weight))
    return 0.5 * (T1 + T2 - np.transpose(T1, (0, 2, 1)))


def local_darcy(ed: ElementData, c, resistivity):
    """A_K(c; u, v) = int A(Pi_1 c, x) Pi_0 u . Pi_0 v + nu_A |K| s_K(u, v).

    ``resistivity(c, x, y)`` is A = mu/k; nu_A is the cell mean of A at the
    cell mean of Pi_1 c.
    """
    coef = ed.cell_coefficients(c)
    q = ed.quad
    A = np.broadcast_to(resistivity(ed.concentration_at_points(c), q.x, q.y), q.x.shape)
    A_int = q.cell_sum(A)
    Q = ed.proj.velocity
    cons = A_int[:, None, None] * np.einsum("cdi,cdj->cij", Q, Q)
    A_mean = np.broadcast_to(resistivity(coef[q.cell, 0], q.x, q.y), q.x.shape)
    nu = np.abs(q.cell_sum(A_mean))  # = |K| * mean
    return cons + _stab_form(ed.velocity_stab, nu)


def local_div(ed: ElementData):
    """B_K(v, 1) = -int_K div v, as a row over the local velocity DOFs."""
    return -ed.proj.div * ed.mesh.area[:, None]


def local_rhs(ed: ElementData, values):
    """int_K s Pi z for point values s, shape (nc, m)."""
    return np.einsum("caj,ca->cj", ed.proj.elliptic, ed.quad.cell_sum(values[:, None] * ed.mono))


def local_gravity_rhs(ed: ElementData, c, gravity):
    """int_K gamma(Pi_1 c, x) . Pi_0 v, shape (nc, m)."""
    q = ed.quad
    gx, gy = gravity(ed.concentration_at_points(c), q.x, q.y)
    g = q.cell_sum(np.stack([np.broadcast_to(gx, q.x.shape), np.broadcast_to(gy, q.x.shape)], axis=1))
    return np.einsum("cd,cdj->cj", g, ed.proj.velocity)


def local_source(ed: ElementData, values):
    """-int_K G for point values G, shape (nc,)."""
    return -ed.quad.cell_sum(values)
