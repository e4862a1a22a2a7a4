"""Reference elements (P1, P2, P1+bubble) and global dof maps.

Scalar dofs are numbered vertices first, then edges (P2) or cells (bubble).
A vector space stacks its components blockwise: component ``k`` owns global
ids ``k * n_scalar + scalar_id``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .mesh import LOCAL_EDGES, Mesh, geometry
from .quadrature import QuadratureRule

_DLAMBDA = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


class ElementKind(enum.Enum):
    P1 = "P1"
    P2 = "P2"
    P1_BUBBLE = "P1+bubble"


class ElementChoice(enum.Enum):
    """Velocity/pressure pair; fixes the temperature degree as well."""

    TAYLOR_HOOD = "taylor-hood"
    MINI = "mini"

    @property
    def temperature_degree(self) -> int:
        return 2 if self is ElementChoice.TAYLOR_HOOD else 1

    @property
    def velocity_kind(self) -> ElementKind:
        return ElementKind.P2 if self is ElementChoice.TAYLOR_HOOD else ElementKind.P1_BUBBLE


@dataclass(frozen=True)
class ReferenceElement:
    kind: ElementKind

    @property
    def n_local_dofs(self) -> int:
        return {ElementKind.P1: 3, ElementKind.P2: 6, ElementKind.P1_BUBBLE: 4}[self.kind]

    @property
    def degree(self) -> int:
        """Polynomial degree of the local space (3 for the cubic bubble)."""
        return {ElementKind.P1: 1, ElementKind.P2: 2, ElementKind.P1_BUBBLE: 3}[self.kind]

    @property
    def nodes(self) -> np.ndarray:
        verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        if self.kind is ElementKind.P1:
            return verts
        if self.kind is ElementKind.P2:
            mids = 0.5 * (verts[LOCAL_EDGES[:, 0]] + verts[LOCAL_EDGES[:, 1]])
            return np.vstack([verts, mids])
        return np.vstack([verts, [[1.0 / 3.0, 1.0 / 3.0]]])

    def evaluate(self, points):
        """Shape values ``(npts, nloc)`` and reference gradients ``(npts, nloc, 2)``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        x, y = pts[:, 0], pts[:, 1]
        lam = np.column_stack([1.0 - x - y, x, y])
        npts = len(pts)

        if self.kind is ElementKind.P1:
            grads = np.broadcast_to(_DLAMBDA, (npts, 3, 2)).copy()
            return lam, grads

        if self.kind is ElementKind.P2:
            vals = np.empty((npts, 6))
            grads = np.empty((npts, 6, 2))
            vals[:, :3] = lam * (2.0 * lam - 1.0)
            grads[:, :3] = (4.0 * lam - 1.0)[:, :, None] * _DLAMBDA[None]
            for k, (a, b) in enumerate(LOCAL_EDGES):
                vals[:, 3 + k] = 4.0 * lam[:, a] * lam[:, b]
                grads[:, 3 + k] = 4.0 * (lam[:, b, None] * _DLAMBDA[a] + lam[:, a, None] * _DLAMBDA[b])
            return vals, grads

        bubble = 27.0 * lam[:, 0] * lam[:, 1] * lam[:, 2]
        dbubble = 27.0 * (
            (lam[:, 1] * lam[:, 2])[:, None] * _DLAMBDA[0]
            + (lam[:, 0] * lam[:, 2])[:, None] * _DLAMBDA[1]
            + (lam[:, 0] * lam[:, 1])[:, None] * _DLAMBDA[2]
        )
        vals = np.empty((npts, 4))
        grads = np.empty((npts, 4, 2))
        # nodal basis: the hat functions are corrected to vanish at the barycenter
        vals[:, :3] = lam - bubble[:, None] / 3.0
        grads[:, :3] = _DLAMBDA[None] - dbubble[:, None, :] / 3.0
        vals[:, 3] = bubble
        grads[:, 3] = dbubble
        return vals, grads


def evaluate_basis(el: ReferenceElement, point):
    """Values ``(nloc,)`` and reference gradients ``(nloc, 2)`` at one point."""
    vals, grads = el.evaluate(np.asarray(point, dtype=float).reshape(1, 2))
    return vals[0], grads[0]


@dataclass(frozen=True, eq=False)
class FeSpace:
    """Continuous Lagrange-type space on a mesh.

    ``dof_map`` holds scalar ids per cell; use :meth:`component_dof_map`
    for the global ids of one vector component.
    """

    element: ReferenceElement
    mesh: Mesh
    dof_map: np.ndarray  # (nc, nloc)
    nodes: np.ndarray  # (n_scalar, 2) node coordinates
    dirichlet_dofs: np.ndarray  # sorted global ids, all components
    vector_multiplicity: int = 1

    @property
    def n_scalar(self) -> int:
        return len(self.nodes)

    @property
    def n_dofs(self) -> int:
        return self.n_scalar * self.vector_multiplicity

    @property
    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.dirichlet_dofs] = False
        return np.flatnonzero(mask)

    @property
    def n_free(self) -> int:
        return self.n_dofs - len(self.dirichlet_dofs)

    def component_dof_map(self, k: int) -> np.ndarray:
        return self.dof_map + k * self.n_scalar

    def interpolate(self, func) -> np.ndarray:
        """Nodal interpolant of ``func(x, y)``.

        For vector spaces ``func`` returns a sequence of ``vector_multiplicity``
        arrays. Boundary values are kept as given, not zeroed.
        """
        x, y = self.nodes.T
        out = func(x, y)
        if self.vector_multiplicity == 1:
            out = (out,)
        comps = np.array([np.broadcast_to(np.asarray(c, dtype=float), x.shape) for c in out])
        return comps.reshape(-1)


def _build(mesh: Mesh, kind: ElementKind, multiplicity: int, zero_trace: bool) -> FeSpace:
    nv = mesh.n_vertices
    if kind is ElementKind.P1:
        dof_map = mesh.cells.copy()
        nodes = mesh.vertices.copy()
        on_boundary = mesh.boundary_vertices.copy()
    elif kind is ElementKind.P2:
        dof_map = np.hstack([mesh.cells, nv + mesh.cell_edges])
        mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
        nodes = np.vstack([mesh.vertices, mids])
        on_boundary = np.concatenate([mesh.boundary_vertices, mesh.boundary_edges])
    else:
        dof_map = np.hstack([mesh.cells, nv + np.arange(mesh.n_cells)[:, None]])
        nodes = np.vstack([mesh.vertices, mesh.vertices[mesh.cells].mean(axis=1)])
        on_boundary = np.concatenate([mesh.boundary_vertices, np.zeros(mesh.n_cells, dtype=bool)])

    n_scalar = len(nodes)
    if zero_trace:
        bnd = np.flatnonzero(on_boundary)
        dirichlet = np.concatenate([bnd + k * n_scalar for k in range(multiplicity)])
    else:
        dirichlet = np.empty(0, dtype=np.int64)
    for a in (dof_map, nodes, dirichlet):
        a.flags.writeable = False
    return FeSpace(ReferenceElement(kind), mesh, dof_map, nodes, dirichlet, multiplicity)


def build_velocity_space(mesh: Mesh, choice: ElementChoice) -> FeSpace:
    """Zero-trace 2-vector space: P2 (Taylor-Hood) or P1+bubble (mini)."""
    return _build(mesh, choice.velocity_kind, 2, zero_trace=True)


def build_pressure_space(mesh: Mesh) -> FeSpace:
    """Continuous P1 without constraints; the zero mean is imposed by the solver."""
    return _build(mesh, ElementKind.P1, 1, zero_trace=False)


def build_temperature_space(mesh: Mesh, choice: ElementChoice) -> FeSpace:
    kind = ElementKind.P2 if choice.temperature_degree == 2 else ElementKind.P1
    return _build(mesh, kind, 1, zero_trace=True)


@dataclass(frozen=True, eq=False)
class Spaces:
    velocity: FeSpace
    pressure: FeSpace
    temperature: FeSpace
    choice: ElementChoice

    @property
    def mesh(self) -> Mesh:
        return self.velocity.mesh


def build_spaces(mesh: Mesh, choice: ElementChoice) -> Spaces:
    return Spaces(
        build_velocity_space(mesh, choice),
        build_pressure_space(mesh),
        build_temperature_space(mesh, choice),
        choice,
    )


def ndof_total(spaces: Spaces) -> int:
    """Free velocity dofs + all nodal pressure dofs + free temperature dofs."""
    return spaces.velocity.n_free + spaces.pressure.n_dofs + spaces.temperature.n_free


@dataclass(frozen=True, eq=False)
class CellQuadrature:
    """Per-cell quadrature data for one rule on one mesh."""

    rule: QuadratureRule
    points: np.ndarray  # (nc, nq, 2) physical points
    weights: np.ndarray  # (nc, nq) physical weights, |det J| included
    invT: np.ndarray  # (nc, 2, 2)


def cell_quadrature(mesh: Mesh, rule: QuadratureRule) -> CellQuadrature:
    J, det, invT = geometry(mesh)
    v0 = mesh.vertices[mesh.cells[:, 0]]
    points = v0[:, None, :] + np.einsum("cij,qj->cqi", J, rule.points)
    weights = np.abs(det)[:, None] * rule.weights[None, :]
    return CellQuadrature(rule, points, weights, invT)


def tabulate(space: FeSpace, cq: CellQuadrature):
    """Basis values ``(nq, nloc)`` and physical gradients ``(nc, nq, nloc, 2)``."""
    vals, ref_grads = space.element.evaluate(cq.rule.points)
    grads = np.einsum("cij,qlj->cqli", cq.invT, ref_grads)
    return vals, grads


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Finite element function: coefficient vector on all dofs of a space."""

    space: FeSpace
    values: np.ndarray

    def __post_init__(self):
        if len(self.values) != self.space.n_dofs:
            raise ValueError(
                f"coefficient length {len(self.values)} != n_dofs {self.space.n_dofs}")

    @classmethod
    def zero(cls, space: FeSpace) -> CoefficientField:
        return cls(space, np.zeros(space.n_dofs))

    def at_quadrature(self, cq: CellQuadrature, tab=None):
        """Values and gradients at all quadrature points.

        Scalar fields give ``(nc, nq)`` and ``(nc, nq, 2)``; vector fields
        give ``(nc, nq, m)`` and ``(nc, nq, m, 2)`` with ``grad[..., i, j] = d_j u_i``.
        """
        vals, grads = tab if tab is not None else tabulate(self.space, cq)
        comps_v, comps_g = [], []
        for k in range(self.space.vector_multiplicity):
            local = self.values[self.space.component_dof_map(k)]  # (nc, nloc)
            comps_v.append(local @ vals.T)
            comps_g.append(np.einsum("cl,cqlj->cqj", local, grads))
        if self.space.vector_multiplicity == 1:
            return comps_v[0], comps_g[0]
        return np.stack(comps_v, axis=-1), np.stack(comps_g, axis=-2)
