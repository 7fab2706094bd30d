import numpy as np
import pytest

from vemmd import mesh as M

UNIT_SQUARE = ([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2, 3]])


def regular_polygon(n, r=1.0, center=(0.0, 0.0), phase=0.3):
    a = phase + 2 * np.pi * np.arange(n) / n
    return np.column_stack([center[0] + r * np.cos(a), center[1] + r * np.sin(a)])


def single_cell(pts):
    pts = np.asarray(pts, dtype=float)
    return M.build_mesh(pts, [list(range(len(pts)))])


def edge_by_midpoint(mesh, point):
    return int(np.argmin(np.linalg.norm(mesh.edge_midpoint - np.asarray(point, dtype=float), axis=1)))


@pytest.fixture(scope="session")
def unit_square():
    return M.build_mesh(*UNIT_SQUARE)


@pytest.fixture(scope="session")
def family_meshes():
    """One coarse mesh of every family, enough cells for >= 100 in total."""
    return {
        "triangular": M.generate("triangular", 4),
        "square": M.generate("square", 4),
        "concave": M.generate("concave", 4),
        "voronoi_structured": M.generate("voronoi_structured", 5, seed=1),
        "voronoi_random": M.generate("voronoi_random", 5, seed=2),
    }


@pytest.fixture(scope="session")
def all_cells(family_meshes):
    return [(m, k) for m in family_meshes.values() for k in range(m.n_cells)]
