import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vemmd import projectors as PR
from vemmd.polybasis import ScaledMonomialBasis, edge_quadrature, polygon_quadrature

from .conftest import edge_by_midpoint, regular_polygon, single_cell


def edge_average(mesh, e, f, degree=8):
    a, b = mesh.vertices[mesh.edges[e]]
    q = edge_quadrature(a, b, degree)
    return q.integrate(f) / mesh.edge_length[e]


def concentration_dofs(mesh, K, f):
    return np.array([edge_average(mesh, e, f) for e in mesh.cell_edges[K]])


def velocity_dofs(mesh, K, field):
    out = []
    for e in mesh.cell_edges[K]:
        n = mesh.edge_normal[e]
        out.append(edge_average(mesh, e, lambda x, y: field(x, y)[0] * n[0] + field(x, y)[1] * n[1]))
    return np.array(out)


def coeffs_of(mesh, K, f):
    """Scaled-monomial coefficients of a linear function f."""
    xk, hk = mesh.centroid[K], mesh.diameter[K]
    c0 = f(*xk)
    return np.array([c0, (f(xk[0] + hk, xk[1]) - c0), (f(xk[0], xk[1] + hk) - c0)])


def test_cell_count(all_cells):
    assert len(all_cells) >= 100
    assert len({id(m) for m, _ in all_cells}) == 5


def test_reproduction_all_families(all_cells):
    for m, K in all_cells:
        P = PR.elliptic_projector(m, K)
        D = PR.monomial_dofs(m, K)
        assert np.abs(P @ D - np.eye(3)).max() < 1e-12
        Q = PR.l2_projector_velocity(m, K)
        N = PR.constant_velocity_dofs(m, K)
        assert np.abs(Q @ N - np.eye(2)).max() < 1e-12
        G = PR.grad_projector_concentration(m, K)
        assert np.abs(G @ D - np.array([[0, 1, 0], [0, 0, 1]]) / m.diameter[K]).max() < 1e-12 / m.diameter[K]
        assert np.abs(PR.divergence(m, K) @ N).max() < 1e-12 / m.diameter[K]
        # the radial field x - xK has divergence 2 and zero mean
        dofs = velocity_dofs(m, K, lambda x, y: (x - m.centroid[K][0], y - m.centroid[K][1]))
        assert PR.divergence(m, K, dofs) == pytest.approx(2.0, abs=1e-12)
        assert np.abs(Q @ dofs).max() < 1e-12 * m.diameter[K]


def test_idempotence(all_cells):
    rng = np.random.default_rng(0)
    for m, K in all_cells:
        P, D = PR.elliptic_projector(m, K), PR.monomial_dofs(m, K)
        z = rng.standard_normal(len(m.cell_edges[K]))
        once = D @ P @ z
        assert np.abs(D @ P @ once - once).max() < 1e-12 * max(1, np.abs(once).max())
        Q, N = PR.l2_projector_velocity(m, K), PR.constant_velocity_dofs(m, K)
        v = N @ Q @ z
        assert np.abs(N @ Q @ v - v).max() < 1e-12 * max(1, np.abs(v).max())


def quartic(x, y):
    return x**4 - 2 * x**2 * y + 3 * y**3 * x + y - 0.5


def quartic_grad(x, y):
    return 4 * x**3 - 4 * x * y + 3 * y**3, -2 * x**2 + 9 * y**2 * x + 1


def test_elliptic_orthogonality_quartic(all_cells):
    """grad(z - Pi z) is orthogonal to constants and the boundary means agree,
    with the quartic z integrated by dense quadrature."""
    for m, K in all_cells[::3]:
        pts = tuple(map(tuple, m.cell_points(K)))
        coef = PR.elliptic_projector(m, K) @ concentration_dofs(m, K, quartic)
        basis = ScaledMonomialBasis(m.centroid[K], m.diameter[K], 1)
        q = polygon_quadrature(pts, 8)
        gx, gy = quartic_grad(q.points[:, 0], q.points[:, 1])
        grad_pi = coef[1:] / m.diameter[K]
        assert np.allclose([q.weights @ gx, q.weights @ gy], m.area[K] * grad_pi, rtol=1e-10, atol=1e-12)
        bz = bp = 0.0
        for e in m.cell_edges[K]:
            a, b = m.vertices[m.edges[e]]
            eq = edge_quadrature(a, b, 8)
            bz += eq.integrate(quartic)
            bp += eq.integrate(lambda x, y: basis(x, y) @ coef)
        assert bz == pytest.approx(bp, rel=1e-10, abs=1e-13)


def test_unit_square_z_equals_x(unit_square):
    m = unit_square
    dofs = np.zeros(4)
    for where, val in (((0, 0.5), 0.0), ((1, 0.5), 1.0), ((0.5, 1), 0.5), ((0.5, 0), 0.5)):
        dofs[list(m.cell_edges[0]).index(edge_by_midpoint(m, where))] = val
    assert np.allclose(dofs, concentration_dofs(m, 0, lambda x, y: x))
    coef = PR.elliptic_projector(m, 0) @ dofs
    assert np.allclose(coef, [0.5, np.sqrt(2), 0.0], atol=1e-15)
    assert np.array_equal(PR.l2_projector_concentration(m, 0) @ dofs, coef)
    assert np.allclose(PR.grad_projector_concentration(m, 0) @ dofs, [1, 0])


def test_constants_reproduced(all_cells):
    for m, K in all_cells[::5]:
        n = len(m.cell_edges[K])
        assert np.allclose(PR.elliptic_projector(m, K) @ np.full(n, 3.0), [3, 0, 0], atol=1e-13)
        assert np.abs(PR.grad_projector_concentration(m, K) @ np.full(n, 3.0)).max() < 1e-12


def brute_force_elliptic(pts, f, grad, hk, xk):
    """Minimise |grad(f - p)|^2 over P1 plus the boundary-mean constraint, by dense quadrature."""
    q = polygon_quadrature(tuple(map(tuple, pts)), 10)
    gx, gy = grad(q.points[:, 0], q.points[:, 1])
    area = q.weights.sum()
    slope = np.array([q.weights @ gx, q.weights @ gy]) / area
    per = mean = 0.0
    for i in range(len(pts)):
        a, b = pts[i], pts[(i + 1) % len(pts)]
        eq = edge_quadrature(a, b, 10)
        per += np.linalg.norm(b - a)
        mean += eq.integrate(lambda x, y: f(x, y) - slope[0] * (x - xk[0]) - slope[1] * (y - xk[1]))
    return np.array([mean / per, slope[0] * hk, slope[1] * hk])


def test_pentagon_x2_brute_force():
    m = single_cell(regular_polygon(5, 0.7, (0.3, -0.2)))
    dofs = concentration_dofs(m, 0, lambda x, y: x**2)
    got = PR.elliptic_projector(m, 0) @ dofs
    want = brute_force_elliptic(m.cell_points(0), lambda x, y: x**2, lambda x, y: (2 * x, 0 * y), m.diameter[0], m.centroid[0])
    assert np.allclose(got, want, rtol=1e-12, atol=1e-14)


def test_x2_mean_unit_square(unit_square):
    dofs = concentration_dofs(unit_square, 0, lambda x, y: x**2)
    a = PR.l2_projector_concentration(unit_square, 0) @ dofs
    b = PR.elliptic_projector(unit_square, 0) @ dofs
    assert a[0] == b[0]


def test_grad_projector_random_dofs_boundary_formula(unit_square):
    rng = np.random.default_rng(3)
    m = unit_square
    for _ in range(10):
        z = rng.standard_normal(4)
        want = np.zeros(2)
        for j, e in enumerate(m.cell_edges[0]):
            want += m.cell_signs[0][j] * m.edge_length[e] * z[j] * m.edge_normal[e]
        assert np.allclose(PR.grad_projector_concentration(m, 0) @ z, want / m.area[0], atol=1e-15)


def test_velocity_examples(unit_square):
    m = unit_square
    Q = PR.l2_projector_velocity(m, 0)
    assert np.allclose(Q @ velocity_dofs(m, 0, lambda x, y: (1.0 + 0 * x, 0 * x)), [1, 0])
    assert np.allclose(Q @ np.zeros(4), [0, 0])
    assert np.allclose(Q @ velocity_dofs(m, 0, lambda x, y: (y, 0 * x)), [0.5, 0], atol=1e-15)


def test_divergence_examples(unit_square):
    m = unit_square
    assert PR.divergence(m, 0, velocity_dofs(m, 0, lambda x, y: (x / 2, y / 2))) == pytest.approx(1.0)
    assert PR.divergence(m, 0, velocity_dofs(m, 0, lambda x, y: (2 + 0 * x, -1 + 0 * y))) == pytest.approx(0.0, abs=1e-15)
    # signed length-weighted DOFs summing to zero
    z = m.cell_signs[0] * np.array([1.0, 2.0, 1.0, 2.0])
    z[:2] *= -1
    assert PR.divergence(m, 0, z) == pytest.approx(0.0, abs=1e-15)


def test_higher_order_rejected(unit_square):
    for f in (PR.elliptic_projector, PR.l2_projector_velocity, PR.grad_projector_concentration):
        with pytest.raises(NotImplementedError):
            f(unit_square, 0, k=1)
    with pytest.raises(NotImplementedError):
        PR.build_projectors(unit_square, k=1)


def test_batched_equals_per_cell(family_meshes):
    for m in family_meshes.values():
        ps = PR.build_projectors(m)
        for K in range(0, m.n_cells, 3):
            n = len(m.cell_edges[K])
            assert np.allclose(ps.elliptic[K, :, :n], PR.elliptic_projector(m, K), atol=1e-14)
            assert np.allclose(ps.velocity[K, :, :n], PR.l2_projector_velocity(m, K), atol=1e-14)
            assert np.allclose(ps.grad[K, :, :n], PR.grad_projector_concentration(m, K), atol=1e-12)
            assert np.allclose(ps.div[K, :n], PR.divergence(m, K), atol=1e-12)
            assert np.all(ps.elliptic[K, :, n:] == 0) and np.all(ps.velocity[K, :, n:] == 0)


@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(3, 9),
    r=st.floats(1e-3, 1e3),
    a=st.floats(-5, 5),
    b=st.floats(-5, 5),
    c=st.floats(-5, 5),
    jitter=st.floats(0, 0.3),
)
def test_linear_reproduction_property(n, r, a, b, c, jitter):
    pts = regular_polygon(n, r, (r, -r))
    pts = pts + jitter * r * np.sin(np.arange(n)[:, None] * [1.3, 2.1]) / n
    m = single_cell(pts)

    def f(x, y):
        return a + b * (x - r) / r + c * (y + r) / r

    dofs = concentration_dofs(m, 0, f)
    coef = PR.elliptic_projector(m, 0) @ dofs
    assert np.allclose(coef, coeffs_of(m, 0, f), rtol=1e-10, atol=1e-10)
