"""Sparse assembly of the discrete forms and load vectors.

Every matrix is returned in CSR form on *all* dofs of its spaces (boundary
dofs included); the solver restricts to free dofs. Row index = test
function, column index = trial function. Accumulation runs in cell order,
so identical inputs give bit-identical matrices.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .femspace import CellQuadrature, CoefficientField, FeSpace, cell_quadrature, tabulate
from .quadrature import QuadratureRule, collapsed_gauss_rule, rule_for_degree

# exactness used whenever a non-polynomial weight (nu(T), kappa(T), |u|^(s-2)) or forcing enters;
# the cubic bubble space needs 12 so that |u|^2 u . v is integrated exactly for s = 4
NONLINEAR_DEGREE = 10
BUBBLE_NONLINEAR_DEGREE = 12


@dataclass(frozen=True)
class MaterialLaws:
    """Temperature-dependent viscosity and diffusivity plus the Forchheimer exponent.

    The bounds are claims about ``nu`` and ``kappa`` on ``sample_range``;
    :meth:`check_bounds` verifies them by sampling.
    """

    nu: Callable
    dnu: Callable
    nu_min: float
    nu_max: float
    kappa: Callable
    dkappa: Callable
    kappa_min: float
    kappa_max: float
    s: float
    nu_lipschitz: float = np.inf
    kappa_lipschitz: float = np.inf
    sample_range: tuple = (-10.0, 10.0)

    def __post_init__(self):
        if not 3.0 <= self.s <= 4.0:
            raise ValueError(f"Forchheimer exponent must lie in [3, 4], got {self.s}")
        if not (0 < self.nu_min <= self.nu_max and 0 < self.kappa_min <= self.kappa_max):
            raise ValueError("coefficient bounds must be positive and ordered")

    def check_bounds(self, n_samples: int = 10_000) -> None:
        r = np.linspace(*self.sample_range, n_samples)
        for name, fn, lo, hi in (("nu", self.nu, self.nu_min, self.nu_max),
                                 ("kappa", self.kappa, self.kappa_min, self.kappa_max)):
            vals = fn(r)
            if not (np.all(vals >= lo) and np.all(vals <= hi)):
                raise ValueError(
                    f"{name} leaves [{lo}, {hi}] on {self.sample_range}: "
                    f"range [{vals.min()}, {vals.max()}]")


def _finite(a, what):
    if not np.all(np.isfinite(a)):
        raise FloatingPointError(f"non-finite {what} at a quadrature point")
    return a


def _scatter(local, row_map, col_map, shape):
    nc, nr, ncol = local.shape
    rows = np.broadcast_to(row_map[:, :, None], (nc, nr, ncol)).ravel()
    cols = np.broadcast_to(col_map[:, None, :], (nc, nr, ncol)).ravel()
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=shape).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def _scalar_matrix(space: FeSpace, local):
    return _scatter(local, space.dof_map, space.dof_map, (space.n_scalar, space.n_scalar))


def _vector_block(space: FeSpace, scalar):
    blocks = [scalar] * space.vector_multiplicity
    return sp.block_diag(blocks, format="csr")


def _quad(space: FeSpace, degree: int) -> CellQuadrature:
    return cell_quadrature(space.mesh, rule_for_degree(degree))


def nonlinear_rule(space: FeSpace) -> QuadratureRule:
    """Rule for terms with non-polynomial weights on ``space``."""
    if space.element.degree > 2:
        return collapsed_gauss_rule(BUBBLE_NONLINEAR_DEGREE)
    return rule_for_degree(NONLINEAR_DEGREE)


def _nonlinear_quad(space: FeSpace) -> CellQuadrature:
    return cell_quadrature(space.mesh, nonlinear_rule(space))


def weighted_mass_local(space, cq, weight=None):
    vals, _ = tabulate(space, cq)
    w = cq.weights if weight is None else cq.weights * weight
    return np.einsum("cq,qi,qj->cij", w, vals, vals)


def weighted_stiffness_local(space, cq, weight=None):
    _, grads = tabulate(space, cq)
    w = cq.weights if weight is None else cq.weights * weight
    return np.einsum("cq,cqik,cqjk->cij", w, grads, grads)


def _skew_transport_local(space, cq, w_vals):
    vals, grads = tabulate(space, cq)
    # C[i, j] = int (w . grad phi_j) phi_i
    adv = np.einsum("cqk,cqjk->cqj", w_vals, grads)
    C = np.einsum("cq,qi,cqj->cij", cq.weights, vals, adv)
    return 0.5 * (C - C.transpose(0, 2, 1))


def assemble_viscous_mass(T: CoefficientField, V: FeSpace, laws: MaterialLaws):
    """Matrix of ``int nu(T) grad u : grad v + u . v`` on the velocity space."""
    cq = _nonlinear_quad(V)
    T_vals, _ = T.at_quadrature(cq)
    nu = _finite(laws.nu(T_vals), "viscosity")
    local = weighted_stiffness_local(V, cq, nu) + weighted_mass_local(V, cq)
    return _vector_block(V, _scalar_matrix(V, local))


def assemble_skew_convection(w: CoefficientField, V: FeSpace):
    """Skew-symmetrized convection ``1/2 [(w.grad) u . v - (w.grad) v . u]``."""
    cq = _quad(V, 3 * V.element.degree - 1)
    w_vals, _ = w.at_quadrature(cq)
    local = _skew_transport_local(V, cq, w_vals)
    return _vector_block(V, _scalar_matrix(V, local))


def forchheimer_weight(w_vals, s: float):
    """``|w|^(s-2)`` evaluated as ``exp((s-2) ln|w|)``, zero where ``w = 0``."""
    mag = np.hypot.reduce(w_vals, axis=-1)  # no underflow for tiny |w|
    out = np.zeros_like(mag)
    nz = mag > 0.0
    out[nz] = np.exp((s - 2.0) * np.log(mag[nz]))
    return out


def assemble_forchheimer(w: CoefficientField, V: FeSpace, s: float, rule: QuadratureRule | None = None):
    """Lagged Forchheimer matrix ``int |w|^(s-2) u . v``.

    ``rule`` overrides :func:`nonlinear_rule`.
    """
    cq = cell_quadrature(V.mesh, rule or nonlinear_rule(V))
    w_vals, _ = w.at_quadrature(cq)
    local = weighted_mass_local(V, cq, forchheimer_weight(w_vals, s))
    return _vector_block(V, _scalar_matrix(V, local))


def assemble_divergence(V: FeSpace, Q: FeSpace):
    """``B`` of shape (n_pressure, n_velocity) with ``q . B v = -int q div v``."""
    cq = _quad(V, Q.element.degree + V.element.degree - 1)
    q_vals, _ = tabulate(Q, cq)
    _, v_grads = tabulate(V, cq)
    blocks = []
    for k in range(V.vector_multiplicity):
        local = -np.einsum("cq,qa,cql->cal", cq.weights, q_vals, v_grads[..., k])
        blocks.append(_scatter(local, Q.dof_map, V.component_dof_map(k), (Q.n_dofs, V.n_dofs)))
    return (blocks[0] + blocks[1]).tocsr()


def assemble_heat_diffusion(R: CoefficientField, Y: FeSpace, laws: MaterialLaws):
    """Matrix of ``int kappa(R) grad T . grad S``."""
    cq = _nonlinear_quad(Y)
    R_vals, _ = R.at_quadrature(cq)
    kappa = _finite(laws.kappa(R_vals), "diffusivity")
    return _scalar_matrix(Y, weighted_stiffness_local(Y, cq, kappa))


def assemble_skew_transport(w: CoefficientField, Y: FeSpace):
    """Skew-symmetrized heat transport ``1/2 [(w.grad T) S - (w.grad S) T]``."""
    V = w.space
    cq = _quad(Y, V.element.degree + 2 * Y.element.degree - 1)
    w_vals, _ = w.at_quadrature(cq)
    return _scalar_matrix(Y, _skew_transport_local(Y, cq, w_vals))


def assemble_mass(space: FeSpace):
    cq = _quad(space, 2 * space.element.degree)
    return _vector_block(space, _scalar_matrix(space, weighted_mass_local(space, cq)))


def assemble_stiffness(space: FeSpace):
    cq = _quad(space, max(1, 2 * space.element.degree - 2))
    return _vector_block(space, _scalar_matrix(space, weighted_stiffness_local(space, cq)))


def assemble_pressure_mean(Q: FeSpace) -> np.ndarray:
    """Vector of ``int phi_q`` over the domain."""
    cq = _quad(Q, Q.element.degree)
    vals, _ = tabulate(Q, cq)
    local = np.einsum("cq,qa->ca", cq.weights, vals)
    return np.bincount(Q.dof_map.ravel(), weights=local.ravel(), minlength=Q.n_dofs)


def _load(space: FeSpace, cq: CellQuadrature, values):
    """``int F . phi`` with ``values`` of shape (nc, nq[, m])."""
    vals, _ = tabulate(space, cq)
    if space.vector_multiplicity == 1:
        values = values[..., None]
    out = []
    for k in range(space.vector_multiplicity):
        local = np.einsum("cq,qa->ca", cq.weights * values[..., k], vals)
        out.append(np.bincount(space.dof_map.ravel(), weights=local.ravel(), minlength=space.n_scalar))
    return np.concatenate(out)


def assemble_loads(forcing, V: FeSpace, Y: FeSpace):
    """Load vectors ``(int f . v, int g S)`` on all dofs.

    ``forcing(x, y)`` returns ``(f, g)`` with ``f`` of shape ``x.shape + (2,)``.
    Entries at Dirichlet dofs are computed but dropped by the solver.
    """
    cq = _nonlinear_quad(V)
    x, y = cq.points[..., 0], cq.points[..., 1]
    f, g = forcing(x, y)
    f = _finite(np.asarray(f, dtype=float), "momentum forcing")
    g = _finite(np.asarray(g, dtype=float), "heat forcing")
    return _load(V, cq, f), _load(Y, cq, g)
