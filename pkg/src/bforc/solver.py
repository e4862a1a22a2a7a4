"""Linear solves and the Picard fixed-point loop.

Each sweep solves the lagged momentum saddle problem, then the heat
problem with the new velocity. The pressure mean is fixed by one Lagrange
multiplier bordering the saddle matrix.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .femspace import CoefficientField, Spaces
from .forms import (
    MaterialLaws,
    assemble_divergence,
    assemble_forchheimer,
    assemble_heat_diffusion,
    assemble_pressure_mean,
    assemble_skew_convection,
    assemble_skew_transport,
    assemble_stiffness,
    assemble_viscous_mass,
)

logger = logging.getLogger(__name__)

PIVOT_RTOL = 1e-14
RESIDUAL_RTOL = 1e-10


class SolverError(RuntimeError):
    """A linear solve failed (singular or non-finite system)."""


class SingularMatrixError(SolverError):
    pass


class PicardNonConvergence(RuntimeError):
    def __init__(self, report):
        super().__init__(
            f"Picard iteration did not reach tol after {report.iterations} iterations "
            f"(last increment {report.increments[-1]:.3e})")
        self.report = report


def sparse_lu_solve(M, rhs) -> np.ndarray:
    """Solve ``M x = rhs`` by sparse LU (SuperLU, COLAMD ordering, partial pivoting).

    Raises :class:`SingularMatrixError` when a pivot falls below
    ``1e-14`` times the largest magnitude in its original row.
    """
    M = sp.csc_matrix(M, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    n = M.shape[0]
    if M.shape != (n, n):
        raise ValueError(f"matrix must be square, got {M.shape}")
    if not (np.all(np.isfinite(M.data)) and np.all(np.isfinite(rhs))):
        raise SolverError("non-finite entries in linear system")

    row_max = np.zeros(n)
    np.maximum.at(row_max, M.indices, np.abs(M.data))
    if np.any(row_max == 0.0):
        raise SingularMatrixError("matrix has an empty row")
    try:
        lu = spla.splu(M, permc_spec="COLAMD", diag_pivot_thresh=1.0)
    except RuntimeError as exc:
        raise SingularMatrixError(str(exc)) from exc

    pivots = np.abs(lu.U.diagonal())
    # row i of M becomes row perm_r[i] of L U
    scale = np.empty(n)
    scale[lu.perm_r] = row_max
    if np.any(pivots < PIVOT_RTOL * scale):
        k = int(np.argmin(pivots / scale))
        raise SingularMatrixError(f"numerically singular pivot {pivots[k]:.3e} at step {k}")

    x = lu.solve(rhs)
    bound = RESIDUAL_RTOL * (1.0 + np.max(np.abs(rhs), initial=0.0))
    for _ in range(3):
        r = rhs - M @ x
        if np.max(np.abs(r), initial=0.0) <= bound:
            break
        x = x + lu.solve(r)
    return x


@dataclass
class StateVector:
    """Coefficients on all dofs (boundary entries zero) plus the mean multiplier."""

    u: np.ndarray
    p: np.ndarray
    T: np.ndarray
    lam: float = 0.0

    @classmethod
    def zero(cls, spaces: Spaces) -> StateVector:
        return cls(np.zeros(spaces.velocity.n_dofs), np.zeros(spaces.pressure.n_dofs),
                   np.zeros(spaces.temperature.n_dofs))

    def concatenated(self) -> np.ndarray:
        return np.concatenate([self.u, self.p, self.T])

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.concatenated())) and np.isfinite(self.lam))


@dataclass
class Loads:
    f: np.ndarray  # velocity load, all dofs
    g: np.ndarray  # temperature load, all dofs


@dataclass
class SaddleSystem:
    A: sp.csr_matrix  # free velocity block
    B: sp.csr_matrix  # (n_pressure, n_free_velocity)
    m: np.ndarray  # int phi_q
    f: np.ndarray  # free velocity load

    def bordered(self):
        m = sp.csr_matrix(self.m.reshape(-1, 1))
        return sp.bmat([[self.A, self.B.T, None],
                        [self.B, None, m],
                        [None, m.T, None]], format="csc")


@dataclass
class PicardReport:
    iterations: int = 0
    increments: list = field(default_factory=list)
    converged: bool = False
    mean_residuals: list = field(default_factory=list)  # |m . p| after each momentum step
    divergence_residuals: list = field(default_factory=list)  # ||B u||_inf after each momentum step


def momentum_system(state: StateVector, spaces: Spaces, laws: MaterialLaws, loads: Loads) -> SaddleSystem:
    """Saddle system of one sweep, lagging ``nu(T^i)``, the convecting velocity and ``|u^i|^(s-2)``."""
    V, Q, Y = spaces.velocity, spaces.pressure, spaces.temperature
    T_old = CoefficientField(Y, state.T)
    u_old = CoefficientField(V, state.u)
    A = (assemble_viscous_mass(T_old, V, laws)
         + assemble_skew_convection(u_old, V)
         + assemble_forchheimer(u_old, V, laws.s))
    free = V.free_dofs
    A = A[free][:, free].tocsr()
    B = assemble_divergence(V, Q)[:, free].tocsr()
    return SaddleSystem(A, B, assemble_pressure_mean(Q), loads.f[free])


def solve_momentum_step(state: StateVector, spaces: Spaces, laws: MaterialLaws, loads: Loads):
    """One linearized momentum solve; returns ``(u, p, lam)`` on all dofs."""
    system = momentum_system(state, spaces, laws, loads)
    nvf, npr = system.A.shape[0], system.B.shape[0]
    rhs = np.concatenate([system.f, np.zeros(npr + 1)])
    x = sparse_lu_solve(system.bordered(), rhs)
    u = np.zeros(spaces.velocity.n_dofs)
    u[spaces.velocity.free_dofs] = x[:nvf]
    return u, x[nvf:nvf + npr], float(x[-1])


def solve_heat_step(u_new, T_old, spaces: Spaces, laws: MaterialLaws, loads: Loads) -> np.ndarray:
    """Solve ``(K(T_old) + C(u_new)) T = g`` on free temperature dofs."""
    V, Y = spaces.velocity, spaces.temperature
    K = assemble_heat_diffusion(CoefficientField(Y, T_old), Y, laws)
    C = assemble_skew_transport(CoefficientField(V, u_new), Y)
    free = Y.free_dofs
    M = (K + C)[free][:, free]
    T = np.zeros(Y.n_dofs)
    T[free] = sparse_lu_solve(M, loads.g[free])
    return T


def picard_solve(laws: MaterialLaws, spaces: Spaces, loads: Loads, tol: float = 1e-6,
                 max_iter: int = 100, initial: StateVector | None = None,
                 raise_on_failure: bool = True):
    """Fixed-point iteration until the Euclidean increment of (u, p, T) is ``<= tol``.

    Returns ``(state, report)``. Raises :class:`PicardNonConvergence` after
    ``max_iter`` sweeps unless ``raise_on_failure`` is false.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")

    state = initial if initial is not None else StateVector.zero(spaces)
    report = PicardReport()
    B = assemble_divergence(spaces.velocity, spaces.pressure)
    m = assemble_pressure_mean(spaces.pressure)

    for it in range(1, max_iter + 1):
        u, p, lam = solve_momentum_step(state, spaces, laws, loads)
        report.mean_residuals.append(abs(float(m @ p)))
        report.divergence_residuals.append(float(np.max(np.abs(B @ u), initial=0.0)))
        T = solve_heat_step(u, state.T, spaces, laws, loads)
        new = StateVector(u, p, T, lam)
        if not new.is_finite():
            raise FloatingPointError(f"non-finite iterate at Picard step {it}")

        inc = float(np.linalg.norm(new.concatenated() - state.concatenated()))
        report.increments.append(inc)
        report.iterations = it
        state = new
        logger.debug("picard %d: increment %.3e", it, inc)
        if inc <= tol:
            report.converged = True
            break

    if not report.converged and raise_on_failure:
        raise PicardNonConvergence(report)
    return state, report


def momentum_energy_residual(state: StateVector, spaces: Spaces, laws: MaterialLaws, loads: Loads) -> float:
    """Relative defect of ``a(T;u,u) + a_F(u;u,u) - <f,u> + b(u,p) = 0``."""
    V, Q, Y = spaces.velocity, spaces.pressure, spaces.temperature
    u = state.u
    A = assemble_viscous_mass(CoefficientField(Y, state.T), V, laws)
    F = assemble_forchheimer(CoefficientField(V, u), V, laws.s)
    B = assemble_divergence(V, Q)
    fu = float(loads.f[V.free_dofs] @ u[V.free_dofs])
    defect = u @ (A @ u) + u @ (F @ u) - fu + state.p @ (B @ u)
    return abs(defect) / max(abs(fu), np.finfo(float).tiny)


def heat_energy_residual(state: StateVector, spaces: Spaces, laws: MaterialLaws, loads: Loads) -> float:
    """Relative defect of ``b(T;T,T) = <g,T>``."""
    Y = spaces.temperature
    K = assemble_heat_diffusion(CoefficientField(Y, state.T), Y, laws)
    gT = float(loads.g[Y.free_dofs] @ state.T[Y.free_dofs])
    return abs(state.T @ (K @ state.T) - gT) / max(abs(gT), np.finfo(float).tiny)


def stability_margin(state: StateVector, spaces: Spaces, laws: MaterialLaws, loads: Loads) -> float:
    """``(f, u_h) - nu_min ||grad u_h||^2``; nonnegative for a stable solution."""
    V = spaces.velocity
    K = assemble_stiffness(V)
    fu = float(loads.f[V.free_dofs] @ state.u[V.free_dofs])
    return fu - laws.nu_min * float(state.u @ (K @ state.u))
