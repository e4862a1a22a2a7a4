"""Finite element solver for the stationary convective Brinkman-Forchheimer
equations coupled to a nonlinear heat equation.

Velocity/pressure use Taylor-Hood (P2/P1) or mini (P1+bubble/P1) pairs,
temperature uses P2 or P1 respectively. The nonlinear system is solved by
Picard iteration with skew-symmetrized convection terms.
"""

from .femspace import ElementChoice, build_spaces, ndof_total
from .forms import MaterialLaws
from .mesh import Mesh, read_mesh, refine_uniform, structured_rectangle, structured_unit_square
from .solver import Loads, PicardNonConvergence, PicardReport, SolverError, StateVector, picard_solve

__all__ = [
    "ElementChoice", "Loads", "MaterialLaws", "Mesh", "PicardNonConvergence", "PicardReport",
    "SolverError", "StateVector", "build_spaces", "ndof_total", "picard_solve", "read_mesh",
    "refine_uniform", "structured_rectangle", "structured_unit_square",
]
