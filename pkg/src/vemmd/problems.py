"""Problem definitions: coefficients, manufactured solutions and well-driven tests.

Every coefficient is a plain numpy callable.  Spatial arguments are arrays of
x and y coordinates; ``c`` arguments are concentration values at the same
points; ``t`` is a scalar time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


def _zero(x, y, t=0.0):
    return np.zeros(np.broadcast(x, y).shape)


@dataclass(frozen=True)
class WellSpec:
    location: tuple
    rate: float
    kind: str  # "injector" or "producer"
    concentration: float = 1.0  # injected concentration, injectors only
    radius: float = 0.0  # support of the cosine-bump regularisation; 0 = containing cell only

    def __post_init__(self):
        if self.kind not in ("injector", "producer"):
            raise ValueError(f"well kind must be 'injector' or 'producer', got {self.kind!r}")
        if self.rate < 0:
            raise ValueError("well rates are non-negative magnitudes")
        if self.radius < 0:
            raise ValueError("well radius must be non-negative")

    def weights(self, x, y):
        """Unnormalised bump (1 + cos(pi r / R)) / 2 on r < R."""
        r = np.hypot(x - self.location[0], y - self.location[1])
        return np.where(r < self.radius, 0.5 * (1.0 + np.cos(np.pi * r / max(self.radius, 1e-300))), 0.0)


@dataclass(frozen=True)
class CoefficientSet:
    """Model data.

    ``mobility`` is a(c, x, y) = k/mu(c); the Darcy form uses its reciprocal.
    ``q_plus``/``q_minus`` are distributed source/sink densities and ``load``
    is the injected mass density q+ * c_hat; point wells are added on top of
    these by the solver.
    """

    porosity: Callable
    mobility: Callable
    d_m: float
    d_l: float
    d_t: float
    q_plus: Callable = _zero
    q_minus: Callable = _zero
    load: Callable = _zero
    gravity: Optional[Callable] = None

    def resistivity(self, c, x, y):
        return 1.0 / self.mobility(c, x, y)

    def check(self, bounds=None, samples=None):
        """Return a list of human-readable violations of the standing assumptions."""
        issues = []
        if not (0 < self.d_m <= self.d_t <= self.d_l):
            issues.append(f"dispersion parameters violate 0 < d_m <= d_t <= d_l: {self.d_m}, {self.d_t}, {self.d_l}")
        if bounds is not None and samples is not None:
            x, y, c = samples
            a = self.mobility(c, x, y)
            phi = np.broadcast_to(self.porosity(x, y), np.shape(x))
            (a_lo, a_hi), (p_lo, p_hi) = bounds
            if a.min() < a_lo or a.max() > a_hi:
                issues.append(f"mobility outside [{a_lo}, {a_hi}]")
            if phi.min() < p_lo or phi.max() > p_hi:
                issues.append(f"porosity outside [{p_lo}, {p_hi}]")
        return issues


@dataclass(frozen=True)
class ExactSolution:
    """Closed forms of c, its derivatives, u and its Jacobian, and p.

    ``grad_c`` returns (c_x, c_y); ``hess_c`` returns (c_xx, c_xy, c_yy);
    ``u`` returns (u_x, u_y); ``jac_u`` returns (du_x/dx, du_x/dy, du_y/dx, du_y/dy).
    """

    c: Callable
    c_t: Callable
    grad_c: Callable
    hess_c: Callable
    u: Callable
    jac_u: Callable
    p: Callable

    def div_u(self, x, y, t):
        j = self.jac_u(x, y, t)
        return j[0] + j[3]


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    coefficients: CoefficientSet
    T: float
    c0: Callable = _zero
    exact: Optional[ExactSolution] = None
    wells: tuple = ()
    domain: tuple = (0.0, 1.0, 0.0, 1.0)
    default_family: str = "square"
    meta: dict = field(default_factory=dict)

    @property
    def length_scale(self):
        x0, x1, y0, y1 = self.domain
        if x0 != 0.0 or y0 != 0.0 or x1 != y1:
            raise ValueError("only square domains anchored at the origin are supported")
        return x1


# ------------------------------------------------------------- manufactured


def forcing_oracle(spec: ProblemSpec, x, y, t):
    """(f, q) with f = phi c_t + u.grad c - div(D(u) grad c) and q = div u.

    Porosity is assumed constant in space for manufactured problems.  Where
    |u| vanishes the terms carrying 1/|u| are dropped (their limit is
    direction dependent and only attained on a null set).
    """
    ex = spec.exact
    if ex is None:
        raise ValueError(f"problem {spec.name!r} has no exact solution")
    co = spec.coefficients
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    phi = np.broadcast_to(co.porosity(x, y), x.shape)
    cx, cy = ex.grad_c(x, y, t)
    cxx, cxy, cyy = ex.hess_c(x, y, t)
    ux, uy = ex.u(x, y, t)
    jxx, jxy, jyx, jyy = ex.jac_u(x, y, t)
    r = np.hypot(ux, uy)
    safe = r > 1e-300
    rinv = np.where(safe, 1.0 / np.where(safe, r, 1.0), 0.0)

    lap = cxx + cyy
    divu = jxx + jyy
    # grad |u| = J^T u / |u|
    grx = (jxx * ux + jyx * uy) * rinv
    gry = (jxy * ux + jyy * uy) * rinv
    s = ux * cx + uy * cy
    # grad(u.grad c) = J^T grad c + H u
    gsx = jxx * cx + jyx * cy + cxx * ux + cxy * uy
    gsy = jxy * cx + jyy * cy + cxy * ux + cyy * uy
    uJu = ux * (jxx * ux + jxy * uy) + uy * (jyx * ux + jyy * uy)
    div_w = divu * rinv - uJu * rinv**3
    div_sw = (gsx * ux + gsy * uy) * rinv + s * div_w
    div_flux = phi * (
        co.d_t * (grx * cx + gry * cy) + (co.d_m + co.d_t * r) * lap + (co.d_l - co.d_t) * div_sw
    )
    f = phi * ex.c_t(x, y, t) + s - div_flux
    return f, divu


def _manufactured_coefficients(exact, d_m=0.02, d_l=1.0, d_t=1.0):
    """Sources for a manufactured problem in the skew transport form.

    The transport operator used by the scheme is u.grad c + q+ c, so the
    load is f + q+ c_exact, with q+ and q- the positive and negative parts of
    q = div u.
    """
    holder = {}

    def q_plus(x, y, t):
        return np.maximum(exact.div_u(x, y, t), 0.0)

    def q_minus(x, y, t):
        return np.maximum(-exact.div_u(x, y, t), 0.0)

    def load(x, y, t):
        f, q = forcing_oracle(holder["spec"], x, y, t)
        return f + np.maximum(q, 0.0) * exact.c(x, y, t)

    co = CoefficientSet(
        porosity=lambda x, y: np.ones(np.broadcast(x, y).shape),
        # the manufactured pressure satisfies u = -grad p / (c + 2)
        mobility=lambda c, x, y: 1.0 / (c + 2.0),
        d_m=d_m,
        d_l=d_l,
        d_t=d_t,
        q_plus=q_plus,
        q_minus=q_minus,
        load=load,
    )
    return co, holder


def example1(T=0.01) -> ProblemSpec:
    """Smooth polynomial solution on the unit square with no-flow boundaries."""

    def g(x, y):
        return x**2 * (x - 1) ** 2 + y**2 * (y - 1) ** 2

    def d1(s):
        return 2 * s * (s - 1) * (2 * s - 1)

    def d2(s):
        return 12 * s**2 - 12 * s + 2

    def c(x, y, t):
        return t**2 * g(x, y)

    def c_t(x, y, t):
        return 2 * t * g(x, y)

    def grad_c(x, y, t):
        return t**2 * d1(x), t**2 * d1(y)

    def hess_c(x, y, t):
        return t**2 * d2(x), np.zeros(np.broadcast(x, y).shape), t**2 * d2(y)

    def p(x, y, t):
        cc = c(x, y, t)
        return -0.5 * cc**2 - 2 * cc + 17.0 / 6300.0 * t**4 + 2.0 / 15.0 * t**2

    def u(x, y, t):
        return grad_c(x, y, t)

    def jac_u(x, y, t):
        xx, xy, yy = hess_c(x, y, t)
        return xx, xy, xy, yy

    exact = ExactSolution(c, c_t, grad_c, hess_c, u, jac_u, p)
    co, holder = _manufactured_coefficients(exact)
    spec = ProblemSpec("ex1", co, T, exact=exact, default_family="square")
    holder["spec"] = spec
    return spec


def _ex2_constants():
    i1 = math.sqrt(math.pi) / 20.0 * math.erf(10.0)  # int_0^1 exp(-100 s^2)
    i2 = math.sqrt(math.pi / 200.0) / 2.0 * math.erf(math.sqrt(200.0))  # int_0^1 exp(-200 s^2)
    mean_1mE = 1.0 - i1**2
    mean_1mE2 = 1.0 - 2.0 * i1**2 + i2**2
    return 0.5 * mean_1mE2, 2.0 * mean_1mE


def example2(T=0.01) -> ProblemSpec:
    """Solution with a sharp layer at the corner (0, 0)."""
    eta1, eta2 = _ex2_constants()

    def E(x, y):
        return np.exp(-100.0 * (x**2 + y**2))

    def c(x, y, t):
        return t**2 * (1.0 - E(x, y))

    def c_t(x, y, t):
        return 2 * t * (1.0 - E(x, y))

    def grad_c(x, y, t):
        e = 200.0 * t**2 * E(x, y)
        return e * x, e * y

    def hess_c(x, y, t):
        e = 200.0 * t**2 * E(x, y)
        return e * (1 - 200.0 * x**2), -200.0 * e * x * y, e * (1 - 200.0 * y**2)

    def p(x, y, t):
        cc = c(x, y, t)
        return -0.5 * cc**2 - 2 * cc + eta1 * t**4 + eta2 * t**2

    def jac_u(x, y, t):
        xx, xy, yy = hess_c(x, y, t)
        return xx, xy, xy, yy

    exact = ExactSolution(c, c_t, grad_c, hess_c, grad_c, jac_u, p)
    co, holder = _manufactured_coefficients(exact)
    spec = ProblemSpec("ex2", co, T, exact=exact, default_family="square", meta={"eta": (eta1, eta2)})
    holder["spec"] = spec
    return spec


# ------------------------------------------------------------- well driven

_EX3_TESTS = {
    1: {"M": 1.0, "d_m": 10.0, "layered": False},
    2: {"M": 41.0, "d_m": 0.0, "layered": False},
    3: {"M": 1.0, "d_m": 10.0, "layered": True},
    4: {"M": 41.0, "d_m": 0.0, "layered": True},
}


def permeability(layered):
    def k(x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        if not layered:
            return np.full(x.shape, 80.0)
        return np.where(y < 500.0, 80.0, 20.0)

    return k


EX3_WELL_RADIUS = 300.0  # ft


def example3(test: int) -> ProblemSpec:
    """Quarter five-spot displacement on (0, 1000)^2 ft over 3600 days."""
    if test not in _EX3_TESTS:
        raise ValueError(f"Example 3 test index must be one of 1..4, got {test!r}")
    cfg = _EX3_TESTS[test]
    k = permeability(cfg["layered"])
    factor = cfg["M"] ** 0.25 - 1.0

    def mobility(c, x, y):
        return k(x, y) * (1.0 + factor * c) ** 4

    co = CoefficientSet(
        porosity=lambda x, y: np.full(np.broadcast(x, y).shape, 0.1),
        mobility=mobility,
        d_m=cfg["d_m"],
        d_l=50.0,
        d_t=5.0,
    )
    # a single-cell well makes the skew convection form lose a mesh-independent
    # share of the injected mass; a resolved fixed support converges with h
    wells = (
        WellSpec((1000.0, 1000.0), 30.0, "injector", concentration=1.0, radius=EX3_WELL_RADIUS),
        WellSpec((0.0, 0.0), 30.0, "producer", radius=EX3_WELL_RADIUS),
    )
    return ProblemSpec(
        f"ex3-t{test}",
        co,
        T=3600.0,
        wells=wells,
        domain=(0.0, 1000.0, 0.0, 1000.0),
        default_family="square",
        meta={"M": cfg["M"], "layered": cfg["layered"]},
    )


PROBLEMS = {
    "ex1": example1,
    "ex2": example2,
    "ex3-t1": lambda: example3(1),
    "ex3-t2": lambda: example3(2),
    "ex3-t3": lambda: example3(3),
    "ex3-t4": lambda: example3(4),
}


def get_problem(name) -> ProblemSpec:
    try:
        return PROBLEMS[name]()
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None


class CompatibilityError(ValueError):
    pass


def check_wells(wells, tol=1e-8):
    """Total injection must equal total production (no-flow boundary)."""
    inj = sum(w.rate for w in wells if w.kind == "injector")
    prod = sum(w.rate for w in wells if w.kind == "producer")
    if abs(inj - prod) > tol * max(inj, prod):
        raise CompatibilityError(f"well rates are not balanced: injection {inj} vs production {prod}")
    return inj, prod
