"""Polygonal meshes: topology, geometry, generators and regularity diagnostics.

Cells are stored as counter-clockwise vertex loops.  Every edge carries a
fixed global orientation (from its lower to its higher vertex index) and a
unit normal obtained by rotating the edge tangent clockwise.  ``cell_signs``
records, per cell and local edge, whether that global normal points out of the
cell (+1) or into it (-1).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import Voronoi, cKDTree

FAMILIES = ("triangular", "square", "concave", "voronoi_structured", "voronoi_random")


class MeshError(ValueError):
    """Raised for structurally invalid mesh input."""

    def __init__(self, message, cell=None):
        self.cell = cell
        if cell is not None:
            message = f"cell {cell}: {message}"
        super().__init__(message)


def polygon_area(pts):
    """Signed shoelace area (positive for counter-clockwise loops)."""
    pts = np.asarray(pts, dtype=float)
    # relative to the vertex mean to avoid cancellation far from the origin
    x, y = (pts - pts.mean(0)).T
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_centroid(pts):
    pts = np.asarray(pts, dtype=float)
    ref = pts.mean(0)
    x, y = (pts - ref).T
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * cross.sum()
    return ref + np.array([((x + xn) * cross).sum(), ((y + yn) * cross).sum()]) / (6.0 * a)


def polygon_diameter(pts):
    d = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((d**2).sum(-1)).max())


def _segments_intersect(p1, p2, q1, q2, eps):
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    if ((d1 > eps and d2 < -eps) or (d1 < -eps and d2 > eps)) and (
        (d3 > eps and d4 < -eps) or (d3 < -eps and d4 > eps)
    ):
        return True
    # collinear touching counts as an intersection for non-adjacent edges
    for d, a, b, c in ((d1, q1, q2, p1), (d2, q1, q2, p2), (d3, p1, p2, q1), (d4, p1, p2, q2)):
        if abs(d) <= eps and min(a[0], b[0]) - eps <= c[0] <= max(a[0], b[0]) + eps and (
            min(a[1], b[1]) - eps <= c[1] <= max(a[1], b[1]) + eps
        ):
            return True
    return False


def is_simple(pts, eps=0.0):
    n = len(pts)
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_intersect(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n], eps):
                return False
    return True


@dataclass(frozen=True, eq=False)
class PolyMesh:
    vertices: np.ndarray
    cells: tuple
    edges: np.ndarray
    cell_edges: tuple
    cell_signs: tuple
    edge_cells: np.ndarray
    boundary_edges: np.ndarray
    area: np.ndarray
    centroid: np.ndarray
    diameter: np.ndarray
    edge_length: np.ndarray
    edge_normal: np.ndarray
    edge_midpoint: np.ndarray
    h: float
    meta: dict = field(default_factory=dict)

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @cached_property
    def boundary_mask(self):
        mask = np.zeros(self.n_edges, dtype=bool)
        mask[self.boundary_edges] = True
        return mask

    @cached_property
    def n_edges_per_cell(self):
        return np.array([len(c) for c in self.cells])

    @cached_property
    def padded(self):
        """(edge index, sign, mask) arrays of shape (n_cells, max edges), zero padded."""
        nc, nmax = self.n_cells, int(self.n_edges_per_cell.max())
        idx = np.zeros((nc, nmax), dtype=np.int64)
        sgn = np.zeros((nc, nmax))
        mask = np.zeros((nc, nmax), dtype=bool)
        for k, (e, s) in enumerate(zip(self.cell_edges, self.cell_signs)):
            idx[k, : len(e)] = e
            sgn[k, : len(e)] = s
            mask[k, : len(e)] = True
        return idx, sgn, mask

    def cell_points(self, k):
        return self.vertices[self.cells[k]]

    def outward_normals(self, k):
        return self.cell_signs[k][:, None] * self.edge_normal[self.cell_edges[k]]

    def locate(self, point, tol=1e-9):
        """Index of the cell containing ``point`` (closed polygons).

        Ties on shared boundaries go to the cell with the nearest centroid.
        """
        p = np.asarray(point, dtype=float)
        scale = max(self.h, 1.0) * tol
        best, best_d = None, np.inf
        for k in range(self.n_cells):
            pts = self.cell_points(k)
            lo, hi = pts.min(0) - scale, pts.max(0) + scale
            if np.any(p < lo) or np.any(p > hi):
                continue
            nxt = np.roll(pts, -1, axis=0)
            cross = (nxt[:, 0] - pts[:, 0]) * (p[1] - pts[:, 1]) - (nxt[:, 1] - pts[:, 1]) * (p[0] - pts[:, 0])
            inside = _point_in_polygon(p, pts) or np.any(
                (np.abs(cross) <= scale * self.edge_length[self.cell_edges[k]])
                & (np.minimum(pts[:, 0], nxt[:, 0]) - scale <= p[0])
                & (p[0] <= np.maximum(pts[:, 0], nxt[:, 0]) + scale)
                & (np.minimum(pts[:, 1], nxt[:, 1]) - scale <= p[1])
                & (p[1] <= np.maximum(pts[:, 1], nxt[:, 1]) + scale)
            )
            if inside:
                d = float(np.linalg.norm(self.centroid[k] - p))
                if d < best_d - 1e-14:
                    best, best_d = k, d
        if best is None:
            raise MeshError(f"point {tuple(p)} lies outside the mesh")
        return best

    def scaled(self, factor):
        return build_mesh(self.vertices * factor, [list(c) for c in self.cells], meta=dict(self.meta))

    def to_dict(self):
        return {
            "vertices": [[float(x), float(y)] for x, y in self.vertices],
            "cells": [[int(i) for i in c] for c in self.cells],
        }

    def dump(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))


def _point_in_polygon(p, pts):
    x, y = p
    inside = False
    n = len(pts)
    for i in range(n):
        x0, y0 = pts[i]
        x1, y1 = pts[(i + 1) % n]
        if (y0 > y) != (y1 > y):
            xi = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
            if xi > x:
                inside = not inside
    return inside


def build_mesh(vertices, cells, meta=None) -> PolyMesh:
    """Validate a vertex/cell description and derive topology and geometry.

    Clockwise loops are reversed.  Raises :class:`MeshError` for repeated or
    out-of-range vertex indices, zero-length edges, self-intersecting loops,
    edges shared inconsistently, and vertices that belong to no cell.
    """
    verts = np.asarray(vertices, dtype=float)
    if verts.ndim != 2 or verts.shape[1] != 2:
        raise MeshError("vertices must be an (n, 2) array")
    nv = len(verts)
    loops = []
    for k, c in enumerate(cells):
        c = [int(i) for i in c]
        if len(c) < 3:
            raise MeshError("fewer than three vertices", k)
        if min(c) < 0 or max(c) >= nv:
            raise MeshError("vertex index out of range", k)
        if len(set(c)) != len(c):
            raise MeshError("repeated vertex in loop", k)
        pts = verts[c]
        seg = np.roll(pts, -1, axis=0) - pts
        lengths = np.hypot(seg[:, 0], seg[:, 1])
        scale = polygon_diameter(pts)
        if lengths.min() <= 1e-14 * max(scale, 1e-300):
            raise MeshError("collapsed (zero-length) edge", k)
        if not is_simple(pts, eps=1e-14 * scale * scale):
            raise MeshError("polygon is not simple", k)
        a = polygon_area(pts)
        if abs(a) <= 1e-14 * scale * scale:
            raise MeshError("degenerate polygon with zero area", k)
        if a < 0:
            c = c[::-1]
        loops.append(c)

    used = np.zeros(nv, dtype=bool)
    for c in loops:
        used[c] = True
    if not used.all():
        raise MeshError(f"dangling vertices: {np.flatnonzero(~used)[:10].tolist()}")

    edge_id = {}
    edges, edge_cells = [], []
    cell_edges, cell_signs = [], []
    for k, c in enumerate(loops):
        ids, sg = [], []
        for a, b in zip(c, c[1:] + c[:1]):
            key = (a, b) if a < b else (b, a)
            s = 1 if a < b else -1
            e = edge_id.get(key)
            if e is None:
                e = len(edges)
                edge_id[key] = e
                edges.append(key)
                edge_cells.append([k, -1, s])
            else:
                rec = edge_cells[e]
                if rec[1] != -1:
                    raise MeshError(f"edge {key} shared by more than two cells", k)
                if rec[2] == s:
                    raise MeshError(f"edge {key} traversed in the same direction by two cells", k)
                rec[1] = k
            ids.append(e)
            sg.append(s)
        cell_edges.append(np.array(ids, dtype=np.int64))
        cell_signs.append(np.array(sg, dtype=float))

    edges = np.array(edges, dtype=np.int64)
    ec = np.array([r[:2] for r in edge_cells], dtype=np.int64)
    tang = verts[edges[:, 1]] - verts[edges[:, 0]]
    length = np.hypot(tang[:, 0], tang[:, 1])
    normal = np.column_stack([tang[:, 1], -tang[:, 0]]) / length[:, None]
    mid = 0.5 * (verts[edges[:, 0]] + verts[edges[:, 1]])

    area = np.array([polygon_area(verts[c]) for c in loops])
    centroid = np.array([polygon_centroid(verts[c]) for c in loops])
    diam = np.array([polygon_diameter(verts[c]) for c in loops])

    return PolyMesh(
        vertices=verts,
        cells=tuple(np.array(c, dtype=np.int64) for c in loops),
        edges=edges,
        cell_edges=tuple(cell_edges),
        cell_signs=tuple(cell_signs),
        edge_cells=ec,
        boundary_edges=np.flatnonzero(ec[:, 1] < 0),
        area=area,
        centroid=centroid,
        diameter=diam,
        edge_length=length,
        edge_normal=normal,
        edge_midpoint=mid,
        h=float(diam.max()),
        meta=dict(meta or {}),
    )


def from_dict(data):
    return build_mesh(data["vertices"], data["cells"])


def load(path):
    return from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------- generators


def _grid_vertices(n):
    t = np.arange(n + 1) / n
    x, y = np.meshgrid(t, t, indexing="xy")
    return np.column_stack([x.ravel(), y.ravel()])


def _square_mesh(n):
    def v(i, j):
        return j * (n + 1) + i

    cells = [[v(i, j), v(i + 1, j), v(i + 1, j + 1), v(i, j + 1)] for j in range(n) for i in range(n)]
    return _grid_vertices(n), cells


def _triangular_mesh(n):
    def v(i, j):
        return j * (n + 1) + i

    cells = []
    for j in range(n):
        for i in range(n):
            cells.append([v(i, j), v(i + 1, j), v(i + 1, j + 1)])
            cells.append([v(i, j), v(i + 1, j + 1), v(i, j + 1)])
    return _grid_vertices(n), cells


# zig-zag cut of the unit square, symmetric under rotation by pi about its centre
_ZIGZAG = ((1.0 / 3.0, 0.3), (2.0 / 3.0, 0.7))


def _concave_mesh(n):
    verts = [tuple(p) for p in _grid_vertices(n)]
    index = {}

    def vid(x, y):
        key = (round(x * n * 6), round(y * n * 60))
        if key not in index:
            index[key] = len(index)
        return index[key]

    # register lattice vertices first so their indices follow the grid
    for x, y in verts:
        vid(x, y)
    coords = {}
    for x, y in verts:
        coords[vid(x, y)] = (x, y)
    cells = []
    for j in range(n):
        for i in range(n):
            x0, y0, s = i / n, j / n, 1.0 / n
            pts = {
                "sw": (x0, y0),
                "se": (x0 + s, y0),
                "ne": (x0 + s, y0 + s),
                "nw": (x0, y0 + s),
                "w": (x0, y0 + 0.5 * s),
                "e": (x0 + s, y0 + 0.5 * s),
                "a": (x0 + _ZIGZAG[0][0] * s, y0 + _ZIGZAG[0][1] * s),
                "b": (x0 + _ZIGZAG[1][0] * s, y0 + _ZIGZAG[1][1] * s),
            }
            ids = {}
            for name, (x, y) in pts.items():
                ids[name] = vid(x, y)
                coords[ids[name]] = (x, y)
            cells.append([ids[k] for k in ("sw", "se", "e", "b", "a", "w")])
            cells.append([ids[k] for k in ("ne", "nw", "w", "a", "b", "e")])
    vertices = np.array([coords[i] for i in range(len(coords))])
    return vertices, cells


def _clipped_voronoi(seeds):
    """Voronoi cells of ``seeds`` clipped to the unit square by mirroring."""
    mirrored = [seeds]
    for axis, val in ((0, 0.0), (0, 1.0), (1, 0.0), (1, 1.0)):
        m = seeds.copy()
        m[:, axis] = 2 * val - m[:, axis]
        mirrored.append(m)
    vor = Voronoi(np.vstack(mirrored))
    polys = []
    for i in range(len(seeds)):
        region = vor.regions[vor.point_region[i]]
        pts = np.clip(vor.vertices[region], 0.0, 1.0)
        ang = np.arctan2(pts[:, 1] - seeds[i, 1], pts[:, 0] - seeds[i, 0])
        polys.append(pts[np.argsort(ang)])
    return polys


def _merge_polygons(polys, tol):
    allpts = np.vstack(polys)
    tree = cKDTree(allpts)
    parent = np.arange(len(allpts))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in sorted(tree.query_pairs(tol)):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    roots = np.array([find(i) for i in range(len(allpts))])
    uniq, inv = np.unique(roots, return_inverse=True)
    vertices = allpts[uniq]
    # snap to the domain boundary exactly
    for axis in (0, 1):
        for val in (0.0, 1.0):
            close = np.abs(vertices[:, axis] - val) < tol
            vertices[close, axis] = val
    cells, start = [], 0
    for p in polys:
        ids = inv[start : start + len(p)].tolist()
        start += len(p)
        loop = []
        for v in ids:
            if not loop or loop[-1] != v:
                loop.append(v)
        while len(loop) > 1 and loop[0] == loop[-1]:
            loop.pop()
        cells.append(loop)
    used = sorted({v for c in cells for v in c})
    remap = {v: i for i, v in enumerate(used)}
    return vertices[used], [[remap[v] for v in c] for c in cells]


def _lloyd(seeds, iterations):
    for _ in range(iterations):
        seeds = np.array([polygon_centroid(p) for p in _clipped_voronoi(seeds)])
    return seeds


def _collapse_short_edges(vertices, cells, min_length):
    """Merge the end points of every edge shorter than ``min_length``.

    Merged groups keep a domain corner if they contain one, else the mean of
    their boundary members, else their plain mean.  Cells reduced to fewer
    than three vertices (zero area) are dropped.
    """
    parent = np.arange(len(vertices))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for c in cells:
        for a, b in zip(c, c[1:] + c[:1]):
            if np.linalg.norm(vertices[a] - vertices[b]) < min_length:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(i) for i in range(len(vertices))])
    on_bnd = np.any((vertices == 0.0) | (vertices == 1.0), axis=1)
    corner = np.all((vertices == 0.0) | (vertices == 1.0), axis=1)
    new = vertices.copy()
    for r in np.unique(roots):
        members = np.flatnonzero(roots == r)
        if len(members) == 1:
            continue
        for sel in (corner, on_bnd, np.ones(len(vertices), dtype=bool)):
            chosen = members[sel[members]]
            if len(chosen):
                new[members] = vertices[chosen].mean(axis=0)
                break
    out = []
    for c in cells:
        loop = []
        for v in (int(roots[i]) for i in c):
            if not loop or loop[-1] != v:
                loop.append(v)
        while len(loop) > 1 and loop[0] == loop[-1]:
            loop.pop()
        if len(loop) >= 3:
            out.append(loop)
    used = sorted({v for c in out for v in c})
    remap = {v: i for i, v in enumerate(used)}
    return new[used], [[remap[v] for v in c] for c in out]


def _voronoi_mesh(seeds, iterations, min_length):
    seeds = _lloyd(seeds, iterations)
    polys = _clipped_voronoi(seeds)
    verts, cells = _merge_polygons(polys, tol=1e-10)
    return _collapse_short_edges(verts, cells, min_length)


def generate(family, n, seed=0) -> PolyMesh:
    """Mesh of the unit square from one of :data:`FAMILIES` with ``n`` subdivisions per side.

    Voronoi families use ``n**2`` seeds drawn from ``numpy.random.default_rng(seed)``.
    """
    if family not in FAMILIES:
        raise MeshError(f"unknown mesh family {family!r}; expected one of {FAMILIES}")
    n = int(n)
    if n < 1:
        raise MeshError("subdivision count n must be >= 1")
    if family == "square":
        verts, cells = _square_mesh(n)
    elif family == "triangular":
        verts, cells = _triangular_mesh(n)
    elif family == "concave":
        verts, cells = _concave_mesh(n)
    else:
        rng = np.random.default_rng(seed)
        if family == "voronoi_structured":
            t = (np.arange(n) + 0.5) / n
            x, y = np.meshgrid(t, t, indexing="xy")
            seeds = np.column_stack([x.ravel(), y.ravel()])
            seeds = seeds + rng.uniform(-0.15 / n, 0.15 / n, size=seeds.shape)
            iterations = 3
        else:
            seeds = rng.uniform(0.0, 1.0, size=(n * n, 2))
            iterations = 1
        verts, cells = _voronoi_mesh(seeds, iterations, min_length=0.1 / n)
    return build_mesh(verts, cells, meta={"family": family, "n": n, "seed": seed})


# ------------------------------------------------------------------ quality


@dataclass(frozen=True)
class QualityReport:
    min_edge_ratio: float
    star_shaped_wrt_centroid: np.ndarray
    quasi_uniformity: float
    n_edges_max: int


def star_shaped_wrt(pts, point):
    nxt = np.roll(pts, -1, axis=0)
    cross = (nxt[:, 0] - pts[:, 0]) * (point[1] - pts[:, 1]) - (nxt[:, 1] - pts[:, 1]) * (point[0] - pts[:, 0])
    return bool(np.all(cross > 0))


def quality(mesh: PolyMesh) -> QualityReport:
    ratio = min(float(mesh.edge_length[e].min() / mesh.diameter[k]) for k, e in enumerate(mesh.cell_edges))
    star = np.array([star_shaped_wrt(mesh.cell_points(k), mesh.centroid[k]) for k in range(mesh.n_cells)])
    return QualityReport(
        min_edge_ratio=ratio,
        star_shaped_wrt_centroid=star,
        quasi_uniformity=float(mesh.diameter.min() / mesh.h),
        n_edges_max=int(mesh.n_edges_per_cell.max()),
    )
