"""Scaled monomial bases and quadrature on polygons and segments."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy import sparse
from scipy.special import roots_jacobi, roots_legendre

from .mesh import PolyMesh, polygon_area, polygon_centroid, polygon_diameter, star_shaped_wrt


class QuadratureError(ValueError):
    pass


@dataclass(frozen=True)
class Quadrature:
    points: np.ndarray
    weights: np.ndarray
    degree: int

    def integrate(self, f):
        vals = np.asarray(f(self.points[:, 0], self.points[:, 1]))
        return np.tensordot(self.weights, vals, axes=(0, 0))


def exponents(k_max):
    """Monomial exponents (a, b) ordered by total degree, then by decreasing a."""
    return [(d - j, j) for d in range(k_max + 1) for j in range(d + 1)]


@dataclass(frozen=True)
class ScaledMonomialBasis:
    """m_(a,b)(x) = ((x - xc)/hK)**a * ((y - yc)/hK)**b."""

    center: np.ndarray
    diameter: float
    degree: int

    @property
    def exponents(self):
        return exponents(self.degree)

    def __len__(self):
        return (self.degree + 1) * (self.degree + 2) // 2

    def __call__(self, x, y):
        X = (np.asarray(x, dtype=float) - self.center[0]) / self.diameter
        Y = (np.asarray(y, dtype=float) - self.center[1]) / self.diameter
        return np.stack([X**a * Y**b for a, b in self.exponents], axis=-1)

    @classmethod
    def for_cell(cls, pts, degree):
        pts = np.asarray(pts, dtype=float)
        return cls(polygon_centroid(pts), polygon_diameter(pts), degree)


@lru_cache(maxsize=None)
def _gauss_legendre01(n):
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def reference_triangle_rule(degree):
    """Collapsed (conical product) rule on the triangle (0,0), (1,0), (0,1)."""
    n = max(1, -(-(degree + 1) // 2))
    s, ws = roots_jacobi(n, 1.0, 0.0)
    x = 0.5 * (1.0 + s)
    wx = 0.25 * ws
    t, wt = _gauss_legendre01(n)
    X = np.repeat(x, n)
    Y = (1.0 - X) * np.tile(t, n)
    W = np.outer(wx, wt).ravel()
    return np.column_stack([X, Y]), W


def _triangle_rule(a, b, c, degree):
    ref, w = reference_triangle_rule(degree)
    J = np.column_stack([b - a, c - a])
    det = abs(np.linalg.det(J))
    return a + ref @ J.T, w * det


def ear_clip(pts):
    """Triangulate a simple counter-clockwise polygon; returns index triples."""
    idx = list(range(len(pts)))
    tris = []

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10 * len(pts) ** 2:
            raise QuadratureError("ear clipping failed on a degenerate polygon")
        m = len(idx)
        for i in range(m):
            ip, ic, inx = idx[i - 1], idx[i], idx[(i + 1) % m]
            if cross(pts[ip], pts[ic], pts[inx]) <= 0:
                continue
            tri = (pts[ip], pts[ic], pts[inx])
            ok = True
            for j in idx:
                if j in (ip, ic, inx):
                    continue
                p = pts[j]
                if cross(tri[0], tri[1], p) >= 0 and cross(tri[1], tri[2], p) >= 0 and cross(tri[2], tri[0], p) >= 0:
                    ok = False
                    break
            if ok:
                tris.append((ip, ic, inx))
                idx.pop(i)
                break
        else:
            raise QuadratureError("ear clipping found no ear; polygon is degenerate")
    tris.append(tuple(idx))
    return tris


def triangulate(pts):
    """Sub-triangles as (a, b, c) coordinate triples.

    Fan from the centroid for cells star-shaped with respect to it, ear
    clipping otherwise.
    """
    pts = np.asarray(pts, dtype=float)
    if polygon_area(pts) <= 0:
        raise QuadratureError("polygon must be counter-clockwise with positive area")
    xc = polygon_centroid(pts)
    if star_shaped_wrt(pts, xc):
        return [(xc, pts[i], pts[(i + 1) % len(pts)]) for i in range(len(pts))]
    return [(pts[i], pts[j], pts[k]) for i, j, k in ear_clip(pts)]


def polygon_quadrature(pts, exactness) -> Quadrature:
    """Positive-weight rule exact for bivariate polynomials of total degree ``exactness``."""
    P, W = [], []
    for a, b, c in triangulate(pts):
        p, w = _triangle_rule(a, b, c, exactness)
        P.append(p)
        W.append(w)
    return Quadrature(np.vstack(P), np.concatenate(W), int(exactness))


def edge_quadrature(a, b, exactness) -> Quadrature:
    """Gauss-Legendre rule on the segment [a, b]."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    length = float(np.linalg.norm(b - a))
    if length <= 0.0:
        raise QuadratureError("zero-length edge")
    t, w = _gauss_legendre01(max(1, -(-(exactness + 1) // 2)))
    return Quadrature(a + np.outer(t, b - a), w * length, int(exactness))


def monomial_gram(pts, k_max, basis=None):
    """Gram matrix of the scaled monomials of degree <= k_max on a polygon."""
    if basis is None:
        basis = ScaledMonomialBasis.for_cell(pts, k_max)
    q = polygon_quadrature(pts, 2 * k_max)
    m = basis(q.points[:, 0], q.points[:, 1])
    G = (m * q.weights[:, None]).T @ m
    try:
        np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise QuadratureError("singular monomial Gram matrix (degenerate cell)") from exc
    return G


def green_moment(pts, a, b, center=(0.0, 0.0), scale=1.0):
    """Exact integral of ((x-xc)/s)**a ((y-yc)/s)**b over a polygon.

    Uses the boundary form of Green's theorem, int_K X^a Y^b = 1/(a+1)
    oint X^(a+1) Y^b dY, with a Gauss-Legendre rule exact for the edge
    polynomial.  Independent of the area rules above.
    """
    P = (np.asarray(pts, dtype=float) - np.asarray(center, dtype=float)) / scale
    t, w = _gauss_legendre01(max(1, (a + b + 2) // 2 + 1))
    total = 0.0
    for i in range(len(P)):
        p0, p1 = P[i], P[(i + 1) % len(P)]
        X = p0[0] + t * (p1[0] - p0[0])
        Y = p0[1] + t * (p1[1] - p0[1])
        total += np.sum(w * X ** (a + 1) * Y**b) * (p1[1] - p0[1])
    return total / (a + 1) * scale**2


@dataclass(frozen=True, eq=False)
class MeshQuadrature:
    """Concatenated polygon rules of a whole mesh; ``cell[i]`` owns point ``i``."""

    points: np.ndarray
    weights: np.ndarray
    cell: np.ndarray
    n_cells: int
    degree: int

    @property
    def x(self):
        return self.points[:, 0]

    @property
    def y(self):
        return self.points[:, 1]

    @cached_property
    def _summation(self):
        n = len(self.weights)
        return sparse.csr_matrix((self.weights, (self.cell, np.arange(n))), shape=(self.n_cells, n))

    def cell_sum(self, values):
        """Per-cell sums of ``weights * values``; trailing axes of ``values`` are kept."""
        values = np.asarray(values, dtype=float)
        flat = values.reshape(len(values), -1)
        return (self._summation @ flat).reshape((self.n_cells,) + values.shape[1:])


def mesh_quadrature(mesh: PolyMesh, degree) -> MeshQuadrature:
    P, W, C = [], [], []
    for k in range(mesh.n_cells):
        q = polygon_quadrature(mesh.cell_points(k), degree)
        P.append(q.points)
        W.append(q.weights)
        C.append(np.full(len(q.weights), k, dtype=np.int64))
    return MeshQuadrature(np.vstack(P), np.concatenate(W), np.concatenate(C), mesh.n_cells, degree)


def scaled_monomials(mesh: PolyMesh, quad: MeshQuadrature, k_max=1):
    """Scaled monomials of each point's own cell, shape (n_points, n_basis)."""
    xc = mesh.centroid[quad.cell]
    hk = mesh.diameter[quad.cell]
    X = (quad.x - xc[:, 0]) / hk
    Y = (quad.y - xc[:, 1]) / hk
    return np.stack([X**a * Y**b for a, b in exponents(k_max)], axis=-1)
