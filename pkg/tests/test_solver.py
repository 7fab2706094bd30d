import numpy as np
import pytest

from vemmd import mesh as M
from vemmd.problems import CoefficientSet, ProblemSpec, example1, example2, example3
from vemmd.solver import Discretization, SimulationConfig, SolverError, assemble_matrix, run
from vemmd.spaces import interpolate_velocity, project_pressure


def quiescent(mobility=1.0, d_m=0.02):
    """No sources, constant mobility, zero initial concentration."""
    co = CoefficientSet(
        porosity=lambda x, y: np.ones(np.broadcast(x, y).shape),
        mobility=lambda c, x, y: mobility * np.ones(np.broadcast(c, x, y).shape),
        d_m=d_m,
        d_l=1.0,
        d_t=1.0,
    )
    return ProblemSpec("quiet", co, T=1.0)


def stream_velocity(x, y, t):
    gx, gy = x**2 * (1 - x) ** 2, y**2 * (1 - y) ** 2
    return gx * 2 * y * (1 - y) * (1 - 2 * y), -gy * 2 * x * (1 - x) * (1 - 2 * x)


@pytest.fixture(scope="module")
def ex1_coarse():
    return Discretization(M.generate("square", 4), example1())


def test_no_forcing_gives_zero_flow():
    disc = Discretization(M.generate("voronoi_random", 5, seed=3), quiescent())
    u, p = disc.solve_darcy(np.zeros(disc.mesh.n_edges), 0.3)
    assert not u.any() and not p.any()


@pytest.mark.parametrize("family", ["square", "triangular", "voronoi_random", "concave"])
def test_constant_velocity_patch(family):
    """A uniform flow with matching boundary flux is reproduced to round-off,
    and the pressure equals the cell means of the exact linear pressure."""
    m = M.generate(family, 5, seed=7)
    disc = Discretization(m, quiescent())
    vel = (0.7, -1.3)
    u_ex = interpolate_velocity(m, lambda x, y, t: vel)
    u, p = disc.solve_darcy(np.zeros(m.n_edges), 0.0, boundary_flux=u_ex[m.boundary_mask])
    assert np.abs(u - u_ex).max() < 1e-9
    # A u + grad p = 0 with A = 1
    p_ex = project_pressure(m, lambda x, y, t: -vel[0] * x - vel[1] * y)
    assert np.abs(p - p_ex).max() < 1e-9
    assert abs(p @ m.area) < 1e-12


def test_patch_with_concentration_dependent_mobility():
    m = M.generate("voronoi_structured", 5, seed=1)
    spec = example1()
    disc = Discretization(m, spec)
    # scale the velocity so the manufactured sources are negligible against it
    u_ex = interpolate_velocity(m, lambda x, y, t: (2.0, 1.0))
    c = np.full(m.n_edges, 0.5)
    u, p = disc.solve_darcy(c, 0.0, boundary_flux=u_ex[m.boundary_mask])
    assert np.abs(u - u_ex).max() < 1e-9
    p_ex = project_pressure(m, lambda x, y, t: -2.5 * (2.0 * x + 1.0 * y))
    assert np.abs(p - p_ex).max() < 1e-9


def test_local_conservation_example1(ex1_coarse):
    disc = ex1_coarse
    c = disc.initial_concentration()
    u, _ = disc.solve_darcy(c, 0.0025)
    assert np.abs(disc.conservation_defect(u, 0.0025)).max() < 1e-12
    assert np.abs(u[disc.mesh.boundary_mask]).max() == 0.0


def transport_constant_drift(family, n):
    m = M.generate(family, n, seed=4)
    disc = Discretization(m, quiescent())
    # curl of psi = x^2 (1-x)^2 y^2 (1-y)^2, which vanishes on the boundary
    u = 50 * interpolate_velocity(m, stream_velocity, degree=8)
    assert np.abs(disc.divergence @ u).max() < 1e-13
    c = np.full(m.n_edges, 0.37)
    return np.abs(disc.solve_transport(u, c, 0.1, 0.1) - 0.37).max()


def test_constant_concentration_preserved_on_triangles():
    """With a discretely solenoidal flow and no sources the cellwise mean
    velocities have no normal jumps on triangles, so constants are kept."""
    assert transport_constant_drift("triangular", 8) < 1e-12


@pytest.mark.parametrize("family", ["square", "voronoi_random"])
def test_constant_drift_vanishes_with_h(family):
    """On general polygons the skew form only keeps constants up to the
    normal jumps of Pi_0 u, a consistency error that shrinks with h."""
    assert transport_constant_drift(family, 32) < 0.4 * transport_constant_drift(family, 8)


def test_increment_is_order_tau(ex1_coarse):
    disc = ex1_coarse
    c = disc.initial_concentration() + 0.1
    u, _ = disc.solve_darcy(c, 0.5)
    steps = []
    for tau in (1e-2, 1e-3, 1e-4):
        steps.append(np.abs(disc.solve_transport(u, c, 0.5 + tau, tau) - c).max())
    r = [a / b for a, b in zip(steps, steps[1:])]
    assert all(5 < x < 20 for x in r)


def test_zero_steps_returns_initial_state():
    m = M.generate("square", 3)
    states = run(m, example1(), SimulationConfig(tau=0.01, T=0.0))
    assert len(states) == 1 and states[0].t == 0.0
    assert not states[0].c.any()


def test_run_deterministic():
    m = M.generate("voronoi_random", 5, seed=11)
    cfg = SimulationConfig(tau=0.0025, T=0.01)
    a = run(m, example2(), cfg)[-1]
    b = run(m, example2(), cfg)[-1]
    assert np.array_equal(a.c, b.c) and np.array_equal(a.u, b.u) and np.array_equal(a.p, b.p)


def test_run_output_cadence():
    m = M.generate("square", 3)
    states = run(m, example1(T=0.04), SimulationConfig(tau=0.01, T=0.04, output_every=2))
    assert [s.t for s in states] == pytest.approx([0.0, 0.02, 0.04])
    states = run(m, example1(T=0.04), SimulationConfig(tau=0.01, T=0.04, output_times=(0.03,)))
    assert [s.t for s in states] == pytest.approx([0.0, 0.03, 0.04])


@pytest.mark.parametrize("kw", [{"tau": 0.0, "T": 1.0}, {"tau": -1.0, "T": 1.0}, {"tau": 0.1, "T": -1.0}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SimulationConfig(**kw)


def test_config_rejects_higher_order():
    with pytest.raises(NotImplementedError):
        SimulationConfig(tau=0.1, T=1.0, k=1)


def test_config_non_multiple_warns(caplog):
    cfg = SimulationConfig(tau=0.3, T=1.0)
    with caplog.at_level("WARNING"):
        assert cfg.checked_steps() == 3
    assert "not a multiple" in caplog.text


@pytest.mark.parametrize("tau", [1e-5, 1e-3, 1e-1, 10.0])
def test_transport_solvable_for_any_step(ex1_coarse, tau):
    disc = ex1_coarse
    c = disc.initial_concentration()
    u, _ = disc.solve_darcy(c, 0.0)
    u = u + 5 * interpolate_velocity(disc.mesh, lambda x, y, t: (x * (1 - x), 0 * y))
    c1 = disc.solve_transport(u, c, tau, tau)
    assert np.all(np.isfinite(c1))


def test_transport_matrix_coercive(ex1_coarse):
    disc = ex1_coarse
    u = interpolate_velocity(disc.mesh, lambda x, y, t: (np.sin(5 * y), np.cos(3 * x)))
    A = disc.transport_matrix(u, 1.0, 0.01).toarray()
    assert np.linalg.eigvalsh(0.5 * (A + A.T)).min() > 0


def test_assembled_mass_sums_to_area():
    m = M.generate("concave", 4)
    disc = Discretization(m, quiescent())
    one = np.ones(m.n_edges)
    assert one @ disc.mass @ one == pytest.approx(1.0, rel=1e-13)
    assert abs(disc.mass - disc.mass.T).max() < 1e-15


def test_assemble_matrix_sums_duplicates():
    m = M.generate("square", 2)
    idx, _, mask = m.padded
    local = np.broadcast_to(mask[:, :, None] & mask[:, None, :], idx.shape + idx.shape[1:]).astype(float)
    A = assemble_matrix(m, local)
    # an interior edge is shared by two cells
    e = np.flatnonzero(~m.boundary_mask)[0]
    assert A[e, e] == 2.0


def test_solver_error_carries_step():
    err = SolverError("boom", step=4)
    assert err.step == 4 and "step 4" in str(err)


def test_singular_transport_reported():
    m = M.generate("square", 2)
    disc = Discretization(m, quiescent())
    disc.rtol = 1e-30
    with pytest.raises(SolverError):
        disc.solve_transport(np.zeros(m.n_edges), np.random.default_rng(0).random(m.n_edges), 0.1, 0.1)


def test_well_sources_balanced():
    spec = example3(1)
    m = M.generate("square", 16).scaled(1000.0)
    disc = Discretization(m, spec)
    assert disc._well_plus @ m.area == pytest.approx(30.0)
    assert disc._well_minus @ m.area == pytest.approx(30.0)
    assert np.allclose(disc._well_load, disc._well_plus)
    u, _ = disc.solve_darcy(np.zeros(m.n_edges), 0.0)
    assert np.abs(disc.conservation_defect(u, 0.0)).max() < 1e-9


def test_small_radius_falls_back_to_containing_cell():
    import dataclasses

    spec = example3(1)
    wells = tuple(dataclasses.replace(w, radius=1.0) for w in spec.wells)
    spec = dataclasses.replace(spec, wells=wells)
    m = M.generate("square", 4).scaled(1000.0)
    disc = Discretization(m, spec)
    assert np.count_nonzero(disc._well_plus) == 1
    assert disc._well_plus[m.n_cells - 1] * m.area[-1] == pytest.approx(30.0)
