"""Global assembly and the decoupled backward Euler time loop.

At each level t_n the Darcy saddle-point system is solved with the current
concentration, then the linear transport system advances the concentration
to t_{n+1} with the velocity lagged.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from . import forms
from .mesh import PolyMesh
from .problems import ProblemSpec, check_wells
from .spaces import DofMap, SolutionState, apply_velocity_bc, interpolate_concentration

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True)
class SimulationConfig:
    tau: float
    T: float
    k: int = 0
    rtol: float = 1e-9
    quad_degree: int = 6
    output_every: int | None = None  # steps between stored states; None keeps only the ends
    output_times: tuple = ()

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"time step must be positive, got {self.tau}")
        if self.T < 0:
            raise ValueError(f"final time must be non-negative, got {self.T}")
        if self.k != 0:
            raise NotImplementedError("only the lowest-order case k = 0 is implemented")

    @property
    def n_steps(self):
        return int(round(self.T / self.tau))

    @property
    def final_time(self):
        return self.n_steps * self.tau

    def checked_steps(self):
        n = self.n_steps
        if abs(n * self.tau - self.T) > 1e-9 * self.tau:
            log.warning("T = %g is not a multiple of tau = %g; running to T = %g", self.T, self.tau, n * self.tau)
        return n


@dataclass
class LinearSystem:
    matrix: sparse.csc_matrix
    rhs: np.ndarray
    solution: np.ndarray | None = None
    residual: float = float("nan")

    def solve(self, rtol, what="linear system"):
        try:
            lu = splu(self.matrix)
        except RuntimeError as exc:
            raise SolverError(f"{what}: factorization failed ({exc})") from exc
        x = lu.solve(self.rhs)
        if not np.all(np.isfinite(x)):
            raise SolverError(f"{what}: non-finite solution")
        r = np.linalg.norm(self.matrix @ x - self.rhs)
        scale = max(np.linalg.norm(self.rhs), 1e-300)
        self.residual = r / scale if np.linalg.norm(self.rhs) > 0 else r
        if self.residual > rtol:
            raise SolverError(f"{what}: relative residual {self.residual:.3e} exceeds {rtol:.1e}")
        self.solution = x
        return x


def _scatter_pattern(mesh: PolyMesh):
    idx, _, mask = mesh.padded
    pair = mask[:, :, None] & mask[:, None, :]
    rows = np.broadcast_to(idx[:, :, None], pair.shape)[pair]
    cols = np.broadcast_to(idx[:, None, :], pair.shape)[pair]
    return pair, rows, cols


def assemble_matrix(mesh: PolyMesh, local, pattern=None):
    """Sum padded local matrices (nc, m, m) into a sparse edge-by-edge matrix."""
    pair, rows, cols = pattern if pattern is not None else _scatter_pattern(mesh)
    n = mesh.n_edges
    return sparse.csr_matrix((local[pair], (rows, cols)), shape=(n, n))


def assemble_vector(mesh: PolyMesh, local):
    idx, _, mask = mesh.padded
    return np.bincount(idx[mask], weights=local[mask], minlength=mesh.n_edges)


@dataclass
class Discretization:
    """A mesh bound to a problem: element data, sources and the mass matrix."""

    mesh: PolyMesh
    problem: ProblemSpec
    quad_degree: int = 6
    rtol: float = 1e-9
    residuals: list = field(default_factory=list)

    def __post_init__(self):
        self.dofs = DofMap.from_mesh(self.mesh)
        self.elements = forms.build_element_data(self.mesh, self.quad_degree)
        self._pattern = _scatter_pattern(self.mesh)
        self._well_plus, self._well_minus, self._well_load = self._well_densities()
        self._source_cache = {}
        if self.problem.wells:
            check_wells(self.problem.wells)

    def _well_densities(self):
        """Cellwise well source densities.

        A well with zero radius spreads its rate evenly over the containing
        cell; otherwise cells take its bump sampled at their centroids, so
        mirror-symmetric meshes see mirror-symmetric sources.  Either way the
        discrete rate is exact.
        """
        mesh = self.mesh
        plus, minus, load = (np.zeros(mesh.n_cells) for _ in range(3))
        for w in self.problem.wells:
            dens = w.weights(*mesh.centroid.T) if w.radius > 0 else np.zeros(mesh.n_cells)
            if not dens.any():  # no support, or a radius below the mesh resolution
                dens[mesh.locate(w.location)] = 1.0
            dens *= w.rate / float(dens @ mesh.area)
            if w.kind == "injector":
                plus += dens
                load += dens * w.concentration
            else:
                minus += dens
        return plus, minus, load

    def sources(self, t):
        """(q+, q-, q+ c_hat) at the quadrature points at time t."""
        cached = self._source_cache.get(t)
        if cached is None:
            cached = self._source_cache[t] = self._eval_sources(t)
            while len(self._source_cache) > 2:
                self._source_cache.pop(next(iter(self._source_cache)))
        return cached

    def _eval_sources(self, t):
        co = self.problem.coefficients
        q = self.elements.quad
        shape = q.x.shape
        plus = np.broadcast_to(co.q_plus(q.x, q.y, t), shape) + self._well_plus[q.cell]
        minus = np.broadcast_to(co.q_minus(q.x, q.y, t), shape) + self._well_minus[q.cell]
        load = np.broadcast_to(co.load(q.x, q.y, t), shape) + self._well_load[q.cell]
        return plus, minus, load

    @cached_property
    def mass(self):
        local = forms.local_mass(self.elements, self.problem.coefficients.porosity)
        return assemble_matrix(self.mesh, local, self._pattern)

    @cached_property
    def divergence(self):
        """B as an (n_cells, n_edges) sparse matrix."""
        mesh = self.mesh
        idx, _, mask = mesh.padded
        cells = np.broadcast_to(np.arange(mesh.n_cells)[:, None], idx.shape)
        vals = forms.local_div(self.elements)
        return sparse.csr_matrix((vals[mask], (cells[mask], idx[mask])), shape=(mesh.n_cells, mesh.n_edges))

    def initial_concentration(self):
        c0 = self.problem.c0
        return interpolate_concentration(self.mesh, lambda x, y, t: c0(x, y, t), 0.0, self.quad_degree)

    # ---------------------------------------------------------------- Darcy

    def darcy_system(self, c, t, boundary_flux=None):
        """Full saddle-point system [u | p | multiplier] with boundary conditions applied.

        ``boundary_flux=False`` returns the system before any boundary
        condition is imposed.
        """
        co = self.problem.coefficients
        ed = self.elements
        ne, nc = self.mesh.n_edges, self.mesh.n_cells
        A = assemble_matrix(self.mesh, forms.local_darcy(ed, c, co.resistivity), self._pattern)
        B = self.divergence
        w = sparse.csr_matrix(self.mesh.area[None, :])
        K = sparse.bmat([[A, B.T, None], [B, None, w.T], [None, w, None]], format="csr")
        plus, minus, _ = self.sources(t)
        rhs = np.zeros(self.dofs.n_darcy)
        if co.gravity is not None:
            rhs[:ne] = assemble_vector(self.mesh, forms.local_gravity_rhs(ed, c, co.gravity))
        rhs[ne : ne + nc] = forms.local_source(ed, plus - minus)
        if boundary_flux is False:
            return K, rhs
        return apply_velocity_bc(self.dofs, K, rhs, boundary_flux)

    @cached_property
    def _darcy_free(self):
        # interior velocities and all pressures but the first; the dense
        # multiplier row would otherwise wreck the fill-in of the factorization
        ne, nc = self.mesh.n_edges, self.mesh.n_cells
        return np.r_[np.flatnonzero(~self.dofs.boundary), ne + np.arange(1, nc)]

    def solve_darcy(self, c, t, boundary_flux=None, step=None):
        """(u, p) at time t for concentration DOFs c.

        ``boundary_flux`` prescribes v.n on boundary edges (default no-flow).
        The zero-mean constraint is realised by pinning one pressure and
        shifting afterwards; together with the closed-form multiplier this
        reproduces the solution of the full multiplier system, against which
        the residual is checked.
        """
        ne, nc = self.mesh.n_edges, self.mesh.n_cells
        K, rhs = self.darcy_system(c, t, boundary_flux=False)
        x = np.zeros(self.dofs.n_darcy)
        if boundary_flux is not None:
            x[:ne][self.dofs.boundary] = boundary_flux
        # Interior fluxes cancel in the sum of the divergence rows, so the
        # multiplier is known up front: it carries the mean of the discrete
        # source, which is nonzero only through quadrature error in
        # distributed sources (point wells are balanced exactly).
        g = rhs[ne : ne + nc]
        lam = (g.sum() - (self.divergence @ x[:ne]).sum()) / self.mesh.area.sum()
        x[-1] = lam
        if lam != 0.0:
            log.debug("t=%g: source mean %.3e absorbed by the multiplier", t, -lam)
        free = self._darcy_free
        K = K.tocsr()
        Kf = K[free]
        reduced = LinearSystem(Kf[:, free].tocsc(), rhs[free] - Kf @ x)
        try:
            x[free] = reduced.solve(np.inf, "Darcy system")
        except SolverError as exc:
            raise SolverError(str(exc), step) from exc
        p = x[ne : ne + nc]
        p -= (self.mesh.area @ p) / self.mesh.area.sum()
        rows = np.ones(len(x), dtype=bool)
        rows[:ne] = ~self.dofs.boundary
        r = (K @ x - rhs)[rows]
        residual = np.linalg.norm(r) / max(np.linalg.norm(rhs[rows]), 1e-300)
        if residual > self.rtol and np.linalg.norm(r) > 1e-14:
            raise SolverError(f"Darcy system: relative residual {residual:.3e} exceeds {self.rtol:.1e}", step)
        self.residuals.append(("darcy", t, residual))
        log.debug("darcy t=%g residual=%.2e", t, residual)
        return x[:ne].copy(), p.copy()

    # ------------------------------------------------------------ transport

    def transport_matrix(self, u, t_next, tau):
        co = self.problem.coefficients
        ed = self.elements
        plus, minus, _ = self.sources(t_next)
        local = forms.local_convection(ed, u, plus + minus) + forms.local_diffusion(
            ed, u, co.porosity, co.d_m, co.d_l, co.d_t
        )
        return self.mass / tau + assemble_matrix(self.mesh, local, self._pattern)

    def solve_transport(self, u, c, t_next, tau, step=None):
        """Advance concentration DOFs from t_next - tau to t_next."""
        _, _, load = self.sources(t_next)
        rhs = self.mass @ c / tau + assemble_vector(self.mesh, forms.local_rhs(self.elements, load))
        system = LinearSystem(self.transport_matrix(u, t_next, tau).tocsc(), rhs)
        try:
            x = system.solve(self.rtol, "transport system")
        except SolverError as exc:
            raise SolverError(str(exc), step) from exc
        self.residuals.append(("transport", t_next, system.residual))
        return x

    def conservation_defect(self, u, t):
        """Per-cell int_K div u_h - int_K G, with G tested against zero-mean functions.

        The discrete source enters with its domain mean removed (that mean is
        what the multiplier absorbs), so for compatible data this is the
        plain local balance.
        """
        plus, minus, _ = self.sources(t)
        G = self.elements.quad.cell_sum(plus - minus)
        G = G - self.mesh.area * (G.sum() / self.mesh.area.sum())
        return -(self.divergence @ u) - G

    # ----------------------------------------------------------------- loop

    def run(self, config: SimulationConfig, callback=None):
        """Time series of SolutionState at the configured cadence (both ends always kept)."""
        n_steps = config.checked_steps()
        tau = config.tau
        wanted = {int(round(tt / tau)) for tt in config.output_times}
        log.info("h=%.6g tau=%g N=%d cells=%d edges=%d", self.mesh.h, tau, n_steps, self.mesh.n_cells, self.mesh.n_edges)
        c = self.initial_concentration()
        states = []
        for n in range(n_steps + 1):
            t = n * tau
            u, p = self.solve_darcy(c, t, step=n)
            state = SolutionState(u, p, c, t)
            if callback is not None:
                callback(n, state)
            keep = n == 0 or n == n_steps or n in wanted
            if config.output_every and n % config.output_every == 0:
                keep = True
            if keep:
                states.append(state)
            if n < n_steps:
                c = self.solve_transport(u, c, (n + 1) * tau, tau, step=n + 1)
        worst = max((r for _, _, r in self.residuals), default=0.0)
        log.info("finished t=%g; worst relative residual %.2e", n_steps * tau, worst)
        return states


def run(mesh: PolyMesh, problem: ProblemSpec, config: SimulationConfig, callback=None):
    disc = Discretization(mesh, problem, config.quad_degree, config.rtol)
    return disc.run(config, callback)


def solve_darcy(mesh, problem, c, t, **kw):
    return Discretization(mesh, problem).solve_darcy(c, t, **kw)


def solve_transport(mesh, problem, u, c, t_next, tau):
    return Discretization(mesh, problem).solve_transport(u, c, t_next, tau)
