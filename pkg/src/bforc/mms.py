"""Manufactured solution on the unit square, forcing terms and error norms.

The exact fields are built from two 1D polynomials,
``a(t) = t^2 (1-t)^2`` and ``c(t) = t (1-t)``::

    u = (-a(x) a'(y) / 2, a'(x) a(y) / 2)      (divergence free)
    p = c(x) c(y) - 1/36                        (zero mean)
    T = a(x) a(y)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial

from .femspace import CoefficientField, ElementChoice, build_spaces, cell_quadrature, ndof_total
from .forms import MaterialLaws, assemble_loads, forchheimer_weight
from .mesh import structured_unit_square
from .quadrature import rule_for_degree
from .solver import Loads, StateVector, picard_solve

_A = Polynomial([0.0, 0.0, 1.0, -2.0, 1.0])  # t^2 (1-t)^2
_C = Polynomial([0.0, 1.0, -1.0])  # t (1-t)
_A1, _A2, _A3 = _A.deriv(1), _A.deriv(2), _A.deriv(3)
_C1 = _C.deriv(1)

ERROR_NORM_DEGREE = 8


class ExactSolution:
    """Closed-form fields and derivatives; all methods accept arrays.

    Vector results carry the component on the last axis, gradients are
    ``grad_u[..., i, j] = d_j u_i``.
    """

    def u(self, x, y):
        return np.stack([-0.5 * _A(x) * _A1(y), 0.5 * _A1(x) * _A(y)], axis=-1)

    def grad_u(self, x, y):
        g = np.empty(np.shape(x) + (2, 2))
        g[..., 0, 0] = -0.5 * _A1(x) * _A1(y)
        g[..., 0, 1] = -0.5 * _A(x) * _A2(y)
        g[..., 1, 0] = 0.5 * _A2(x) * _A(y)
        g[..., 1, 1] = 0.5 * _A1(x) * _A1(y)
        return g

    def lap_u(self, x, y):
        return np.stack([
            -0.5 * (_A2(x) * _A1(y) + _A(x) * _A3(y)),
            0.5 * (_A3(x) * _A(y) + _A1(x) * _A2(y)),
        ], axis=-1)

    def p(self, x, y):
        return _C(x) * _C(y) - 1.0 / 36.0

    def grad_p(self, x, y):
        return np.stack([_C1(x) * _C(y), _C(x) * _C1(y)], axis=-1)

    def T(self, x, y):
        return _A(x) * _A(y)

    def grad_T(self, x, y):
        return np.stack([_A1(x) * _A(y), _A(x) * _A1(y)], axis=-1)

    def lap_T(self, x, y):
        return _A2(x) * _A(y) + _A(x) * _A2(y)


EXACT = ExactSolution()


def eval_exact(x, y):
    """``(u, p, T)`` of the manufactured solution."""
    return EXACT.u(x, y), EXACT.p(x, y), EXACT.T(x, y)


# both nu laws satisfy their bounds for T in this range; the exact T lies in [0, 1/256]
LAW_RANGE = (-0.5, 0.5)


def _nu_linear():
    return dict(nu=lambda t: 1.0 + t, dnu=lambda t: np.ones_like(t),
                nu_min=1.0 + LAW_RANGE[0], nu_max=1.0 + LAW_RANGE[1], nu_lipschitz=1.0)


def _nu_exp():
    return dict(nu=lambda t: 1.0 + np.exp(-t), dnu=lambda t: -np.exp(-t),
                nu_min=1.0 + math.exp(-LAW_RANGE[1]), nu_max=1.0 + math.exp(-LAW_RANGE[0]),
                nu_lipschitz=math.exp(-LAW_RANGE[0]))


_KAPPA = dict(kappa=lambda t: 2.0 + np.sin(t), dkappa=np.cos,
              kappa_min=1.0, kappa_max=3.0, kappa_lipschitz=1.0)


@dataclass(frozen=True)
class TestCase:
    """One of the four coefficient/exponent combinations, or a custom exponent."""

    __test__ = False  # keep pytest from collecting this class

    id: int | str
    laws: MaterialLaws

    @property
    def s(self) -> float:
        return self.laws.s


def _case(id_, nu_kind, s):
    nu = _nu_linear() if nu_kind == "linear" else _nu_exp()
    return TestCase(id_, MaterialLaws(s=s, sample_range=LAW_RANGE, **nu, **_KAPPA))


TEST_CASES = {
    1: _case(1, "linear", 3.0),
    2: _case(2, "exp", 3.0),
    3: _case(3, "linear", 4.0),
    4: _case(4, "exp", 4.0),
}


def get_test_case(id_) -> TestCase:
    try:
        return TEST_CASES[int(id_)]
    except (KeyError, ValueError):
        raise ValueError(f"unknown test case {id_!r}; expected 1-4") from None


def custom_case(s: float) -> TestCase:
    """Test 1 laws with a user-chosen exponent."""
    return _case("custom", "linear", float(s))


def eval_forcing(x, y, tc: TestCase, exact: ExactSolution = EXACT):
    """Momentum forcing ``f`` (last axis = component) and heat source ``g``."""
    laws = tc.laws
    u, gu, lu = exact.u(x, y), exact.grad_u(x, y), exact.lap_u(x, y)
    T, gT, lT = exact.T(x, y), exact.grad_T(x, y), exact.lap_T(x, y)

    nu, dnu = laws.nu(T), laws.dnu(T)
    kappa, dkappa = laws.kappa(T), laws.dkappa(T)

    # -div(nu(T) grad u_i) = -nu'(T) grad T . grad u_i - nu(T) lap u_i
    diffusion = -dnu[..., None] * np.einsum("...ij,...j->...i", gu, gT) - nu[..., None] * lu
    convection = np.einsum("...ij,...j->...i", gu, u)
    drag = u + forchheimer_weight(u, laws.s)[..., None] * u
    f = diffusion + convection + drag + exact.grad_p(x, y)

    g = -dkappa * np.sum(gT * gT, axis=-1) - kappa * lT + np.sum(u * gT, axis=-1)
    return f, g


def manufactured_loads(spaces, tc: TestCase) -> Loads:
    f, g = assemble_loads(lambda x, y: eval_forcing(x, y, tc), spaces.velocity, spaces.temperature)
    return Loads(f, g)


def error_norms(state: StateVector, spaces, exact: ExactSolution = EXACT):
    """``(||grad(u - u_h)||, ||p - p_h||, ||grad(T - T_h)||)`` in L2, degree-8 quadrature."""
    cq = cell_quadrature(spaces.mesh, rule_for_degree(ERROR_NORM_DEGREE))
    x, y = cq.points[..., 0], cq.points[..., 1]
    w = cq.weights

    _, gu_h = CoefficientField(spaces.velocity, state.u).at_quadrature(cq)
    p_h, _ = CoefficientField(spaces.pressure, state.p).at_quadrature(cq)
    _, gT_h = CoefficientField(spaces.temperature, state.T).at_quadrature(cq)

    e_u = math.sqrt(np.sum(w * np.sum((exact.grad_u(x, y) - gu_h) ** 2, axis=(-2, -1))))
    e_p = math.sqrt(np.sum(w * (exact.p(x, y) - p_h) ** 2))
    e_T = math.sqrt(np.sum(w * np.sum((exact.grad_T(x, y) - gT_h) ** 2, axis=-1)))
    return e_u, e_p, e_T


def interpolate_exact(spaces, exact: ExactSolution = EXACT) -> StateVector:
    """Nodal interpolant of the exact solution in each field's own space."""
    u = spaces.velocity.interpolate(lambda x, y: np.moveaxis(exact.u(x, y), -1, 0))
    p = spaces.pressure.interpolate(exact.p)
    T = spaces.temperature.interpolate(exact.T)
    return StateVector(u, p, T)


@dataclass
class LevelResult:
    n: int
    h: float
    ndof: int
    iterations: int
    errors: tuple  # (e_u_h1, e_p_l2, e_T_h1)
    rates: tuple | None  # vs h, None on the first level
    state: StateVector | None = None
    spaces: object = None


def observed_rate(e_prev, e_next, h_prev, h_next) -> float:
    return math.log(e_prev / e_next) / math.log(h_prev / h_next)


def solve_level(tc: TestCase, choice: ElementChoice, n: int, tol=1e-6, max_iter=100):
    """Manufactured solve on the ``n x n`` mesh: ``(spaces, loads, state, report)``."""
    mesh = structured_unit_square(n)
    spaces = build_spaces(mesh, choice)
    loads = manufactured_loads(spaces, tc)
    state, report = picard_solve(tc.laws, spaces, loads, tol=tol, max_iter=max_iter)
    return spaces, loads, state, report


def run_level(tc: TestCase, choice: ElementChoice, n: int, tol=1e-6, max_iter=100,
              keep_state=False) -> LevelResult:
    spaces, _, state, report = solve_level(tc, choice, n, tol, max_iter)
    return LevelResult(
        n=n, h=spaces.mesh.h_max, ndof=ndof_total(spaces), iterations=report.iterations,
        errors=error_norms(state, spaces), rates=None,
        state=state if keep_state else None, spaces=spaces if keep_state else None)


def with_rates(rows: list[LevelResult]) -> list[LevelResult]:
    for prev, cur in zip(rows, rows[1:]):
        cur.rates = tuple(observed_rate(a, b, prev.h, cur.h) for a, b in zip(prev.errors, cur.errors))
    return rows


def convergence_table(tc: TestCase, choice: ElementChoice, levels, tol=1e-6, max_iter=100,
                      map_fn=map) -> list[LevelResult]:
    """Full solves on each level with observed rates against ``h``.

    ``map_fn`` may be an executor's ``map`` to run levels concurrently; rows
    keep the order of ``levels``.
    """
    levels = list(levels)
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError(f"levels must be strictly increasing, got {levels}")
    rows = list(map_fn(lambda n: run_level(tc, choice, n, tol, max_iter), levels))
    return with_rates(rows)
