"""Error metrics, convergence studies and field export."""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import mesh as meshmod
from .forms import ElementData, build_element_data
from .problems import ProblemSpec, get_problem
from .solver import Discretization, SimulationConfig
from .spaces import SolutionState

log = logging.getLogger(__name__)

# (problem, family) -> (first subdivision count, first time step), one entry per
# published table; tau halves and n doubles at each further level
SCHEDULES = {
    ("ex1", "triangular"): (2, 0.001),
    ("ex1", "square"): (4, 0.002),
    ("ex1", "concave"): (2, 0.002),
    ("ex1", "voronoi_structured"): (2, 0.002),
    ("ex1", "voronoi_random"): (2, 0.002),
    ("ex2", "triangular"): (4, 0.0005),
    ("ex2", "square"): (4, 0.002),
    ("ex2", "concave"): (2, 0.002),
    ("ex2", "voronoi_structured"): (2, 0.002),
    ("ex2", "voronoi_random"): (2, 0.002),
}


@dataclass(frozen=True)
class ErrorRow:
    h: float
    tau: float
    err_u: float
    order_u: float | None
    err_p: float
    order_p: float | None
    err_c: float
    order_c: float | None


def _norms(quad, vals):
    return math.sqrt(max(float(quad.weights @ vals), 0.0))


def compute_errors(mesh, state: SolutionState, exact, relative=True, elements: ElementData | None = None, degree=6):
    """(err_u, err_p, err_c) in L2 at ``state.t``.

    The discrete fields enter through Pi_0 u_h, p_h and Pi_1 c_h.  With
    ``relative`` each error is divided by the L2 norm of the exact field
    (left absolute where that norm vanishes).
    """
    ed = elements if elements is not None else build_element_data(mesh, degree)
    q, t = ed.quad, state.t
    ub = ed.cell_velocity(state.u)[q.cell]
    ux, uy = exact.u(q.x, q.y, t)
    pe = np.broadcast_to(exact.p(q.x, q.y, t), q.x.shape)
    ce = np.broadcast_to(exact.c(q.x, q.y, t), q.x.shape)
    errs = (
        _norms(q, (ux - ub[:, 0]) ** 2 + (uy - ub[:, 1]) ** 2),
        _norms(q, (pe - np.asarray(state.p)[q.cell]) ** 2),
        _norms(q, (ce - ed.concentration_at_points(state.c)) ** 2),
    )
    if not relative:
        return errs
    scales = (_norms(q, ux**2 + uy**2), _norms(q, pe**2), _norms(q, ce**2))
    return tuple(e / s if s > 0 else e for e, s in zip(errs, scales))


def compute_order(err_coarse, err_fine, h_ratio=2.0):
    """log(err_coarse / err_fine) / log(h_ratio); NaN when either error is not positive."""
    if not (err_coarse > 0 and err_fine > 0) or not h_ratio > 0 or h_ratio == 1:
        return float("nan")
    return math.log(err_coarse / err_fine) / math.log(h_ratio)


def _level(args):
    problem_name, family, n, tau, T, seed, relative = args
    problem = get_problem(problem_name)
    mesh = meshmod.generate(family, n, seed=seed)
    disc = Discretization(mesh, problem)
    defects = []

    def check(_, st):
        defects.append(float(abs(disc.conservation_defect(st.u, st.t)).max()))

    states = disc.run(SimulationConfig(tau, T), callback=check)
    errs = compute_errors(mesh, states[-1], problem.exact, relative=relative, elements=disc.elements)
    worst = max(defects)
    residual = float(max((r for _, _, r in disc.residuals), default=0.0))
    log.info("level n=%d h=%.6f tau=%g errors %s conservation %.1e", n, mesh.h, tau, errs, worst)
    return mesh.h, tau, errs, {"n": n, "h": mesh.h, "tau": tau, "conservation": worst, "residual": residual}


def run_convergence(
    problem, family, levels, T=None, seed=0, relative=True, n_first=None, tau_first=None, workers=1, diagnostics=None
):
    """Convergence table for a manufactured problem: one ErrorRow per level.

    Orders use the ratio of the actual mesh sizes of consecutive levels.  If
    ``diagnostics`` is a list, one dict per level is appended with the worst
    local conservation defect over all stored states and the worst solver
    residual.
    """
    name = problem if isinstance(problem, str) else problem.name
    spec = get_problem(name) if isinstance(problem, str) else problem
    if spec.exact is None:
        raise ValueError(f"problem {name!r} has no exact solution")
    if levels < 1:
        raise ValueError("need at least one level")
    n0, tau0 = SCHEDULES.get((name, family), (2, 0.002))
    n0 = n_first or n0
    tau0 = tau_first or tau0
    T = spec.T if T is None else T
    jobs = [(name, family, n0 * 2**l, tau0 / 2**l, T, seed, relative) for l in range(levels)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_level, jobs))
    else:
        results = [_level(j) for j in jobs]
    rows = []
    for i, (h, tau, errs, diag) in enumerate(results):
        if diagnostics is not None:
            diagnostics.append(diag)
        if i == 0:
            orders = (None, None, None)
        else:
            h0, _, e0, _ = results[i - 1]
            orders = tuple(compute_order(a, b, h0 / h) for a, b in zip(e0, errs))
        rows.append(ErrorRow(h, tau, errs[0], orders[0], errs[1], orders[1], errs[2], orders[2]))
    return rows


def write_rows(rows, path):
    fields = list(ErrorRow.__dataclass_fields__)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else repr(float(v))) for k, v in asdict(r).items()})


def format_rows(rows):
    """Plain-text table in the layout of the published convergence tables."""
    out = [f"{'h':>9} {'tau':>9} {'err(u)':>9} {'order':>7} {'err(p)':>9} {'order':>7} {'err(c)':>9} {'order':>7}"]
    for r in rows:
        o = ["-" if x is None else f"{x:.4f}" for x in (r.order_u, r.order_p, r.order_c)]
        out.append(
            f"{r.h:9.6f} {r.tau:9.6f} {r.err_u:9.6f} {o[0]:>7} {r.err_p:9.6f} {o[1]:>7} {r.err_c:9.6f} {o[2]:>7}"
        )
    return "\n".join(out)


# ------------------------------------------------------------------ export


def cell_fields(mesh, state: SolutionState, elements: ElementData | None = None):
    """Centroid samples: (x, y, c, p, ux, uy) with c = Pi_1 c_h and u = Pi_0 u_h."""
    ed = elements if elements is not None else build_element_data(mesh)
    coef = ed.cell_coefficients(state.c)
    u = ed.cell_velocity(state.u)
    x, y = mesh.centroid.T
    # the linear monomials vanish at the centroid
    return x, y, coef[:, 0], np.asarray(state.p, dtype=float), u[:, 0], u[:, 1]


def export_fields(mesh, state: SolutionState, path, fmt="csv", elements=None):
    path = Path(path)
    if fmt not in ("csv", "vtk"):
        raise ValueError(f"unknown export format {fmt!r}")
    x, y, c, p, ux, uy = cell_fields(mesh, state, elements)
    try:
        fh = open(path, "w", newline="")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    with fh:
        if fmt == "csv":
            w = csv.writer(fh)
            w.writerow(["x", "y", "c", "p", "ux", "uy"])
            for row in zip(x, y, c, p, ux, uy):
                w.writerow([repr(float(v)) for v in row])
        else:
            _write_vtk(fh, mesh, state.t, c, p, ux, uy)
    return path


def _write_vtk(fh, mesh, t, c, p, ux, uy):
    nv = len(mesh.vertices)
    sizes = [len(cell) for cell in mesh.cells]
    fh.write("# vtk DataFile Version 3.0\n")
    fh.write(f"vemmd fields t={t!r}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
    fh.write(f"POINTS {nv} double\n")
    for vx, vy in mesh.vertices:
        fh.write(f"{vx!r} {vy!r} 0.0\n")
    fh.write(f"CELLS {mesh.n_cells} {sum(sizes) + mesh.n_cells}\n")
    for cell in mesh.cells:
        fh.write(f"{len(cell)} " + " ".join(str(int(v)) for v in cell) + "\n")
    fh.write(f"CELL_TYPES {mesh.n_cells}\n")
    fh.write("7\n" * mesh.n_cells)
    fh.write(f"CELL_DATA {mesh.n_cells}\n")
    for name, vals in (("c", c), ("p", p)):
        fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
        fh.write("".join(f"{float(v)!r}\n" for v in vals))
    fh.write("VECTORS u double\n")
    fh.write("".join(f"{float(a)!r} {float(b)!r} 0.0\n" for a, b in zip(ux, uy)))


def read_fields_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in ("x", "y", "c", "p", "ux", "uy")}


# ------------------------------------------------------------------ simulate


def problem_mesh(problem: ProblemSpec, family, n, seed=0):
    """Mesh of the problem's square domain (unit-square mesh scaled up)."""
    mesh = meshmod.generate(family, n, seed=seed)
    L = problem.length_scale
    return mesh if L == 1.0 else mesh.scaled(L)


def simulate(problem, family, n, tau, snapshots=(), T=None, seed=0):
    """Run a problem and return (mesh, discretization, {time: state})."""
    spec = get_problem(problem) if isinstance(problem, str) else problem
    mesh = problem_mesh(spec, family, n, seed)
    if T is None:
        T = max(snapshots) if snapshots else spec.T
    disc = Discretization(mesh, spec)
    states = disc.run(SimulationConfig(tau, T, output_times=tuple(snapshots)))
    out = {}
    for st in states:
        out[st.t] = st
    return mesh, disc, out
