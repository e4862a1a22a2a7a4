"""Conforming triangulations of rectangles with uniform refinement.

Meshes are immutable: every array is flagged read-only after construction.
Local edge ``k`` of a cell is the edge opposite local vertex ``k``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

MESH_FILE_HEADER = "ntri-mesh 1"

# local edge k joins the two vertices other than k
LOCAL_EDGES = np.array([[1, 2], [2, 0], [0, 1]])


class MeshError(ValueError):
    """Raised for invalid mesh input or degenerate cells."""


def _freeze(*arrays):
    for a in arrays:
        a.flags.writeable = False


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangular mesh with vertex/edge/cell connectivity.

    Attributes
    ----------
    vertices : (nv, 2) float array
    cells : (nc, 3) int array, counterclockwise
    edges : (ne, 2) int array, each undirected pair once with ``edges[:, 0] < edges[:, 1]``
    edge_cells : (ne, 2) int array of adjacent cells, ``-1`` in the second
        slot for boundary edges
    cell_edges : (nc, 3) int array, global id of local edge ``k``
    boundary_edges, boundary_vertices : bool arrays
    """

    vertices: np.ndarray
    cells: np.ndarray
    edges: np.ndarray
    edge_cells: np.ndarray
    cell_edges: np.ndarray
    boundary_edges: np.ndarray
    boundary_vertices: np.ndarray

    @classmethod
    def from_cells(cls, vertices, cells) -> Mesh:
        """Build connectivity from raw vertex coordinates and cell triples.

        Clockwise cells are reoriented; zero-area cells are rejected.
        """
        vertices = np.array(vertices, dtype=float).reshape(-1, 2)
        cells = np.array(cells, dtype=np.int64).reshape(-1, 3)
        if len(cells) == 0:
            raise MeshError("mesh has no cells")
        if cells.min() < 0 or cells.max() >= len(vertices):
            raise MeshError("cell references a vertex out of range")

        det = _signed_det(vertices, cells)
        if np.any(det == 0.0):
            raise MeshError(f"degenerate cell(s): {np.flatnonzero(det == 0.0)[:5].tolist()}")
        flip = det < 0
        cells[flip] = cells[flip][:, [0, 2, 1]]

        local = cells[:, LOCAL_EDGES]  # (nc, 3, 2)
        pairs = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse, counts = np.unique(pairs, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        if np.any(counts > 2):
            raise MeshError("non-manifold edge shared by more than two cells")
        cell_edges = inverse.reshape(-1, 3)

        owner = np.repeat(np.arange(len(cells)), 3)
        order = np.argsort(inverse, kind="stable")
        edge_cells = np.full((len(edges), 2), -1, dtype=np.int64)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        edge_cells[:, 0] = owner[order[starts]]
        two = counts == 2
        edge_cells[two, 1] = owner[order[starts[two] + 1]]

        boundary_edges = counts == 1
        boundary_vertices = np.zeros(len(vertices), dtype=bool)
        boundary_vertices[edges[boundary_edges].ravel()] = True

        arrays = (vertices, cells, edges.astype(np.int64), edge_cells,
                  cell_edges.astype(np.int64), boundary_edges, boundary_vertices)
        _freeze(*arrays)
        return cls(*arrays)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def h_max(self) -> float:
        """Largest cell side length."""
        p = self.vertices[self.cells]
        sides = np.linalg.norm(p[:, [1, 2, 0]] - p, axis=2)
        return float(sides.max())

    def cell_areas(self) -> np.ndarray:
        return 0.5 * _signed_det(self.vertices, self.cells)

    def cell_geometry(self, cell_id: int):
        """Affine map data of one cell.

        Returns ``(jacobian, det, inverse_transpose)`` for the map
        ``x = v0 + J xi`` from the reference triangle with vertices
        (0,0), (1,0), (0,1).
        """
        if not 0 <= cell_id < self.n_cells:
            raise IndexError(f"cell id {cell_id} out of range")
        J, det, invT = geometry(self)
        return J[cell_id].copy(), float(det[cell_id]), invT[cell_id].copy()

    def write(self, path) -> None:
        write_mesh(self, path)


def _signed_det(vertices, cells):
    p = vertices[cells]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]


def geometry(mesh: Mesh):
    """Vectorized affine maps for all cells: ``(J, det, inv(J).T)``."""
    p = mesh.vertices[mesh.cells]
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # columns are edge vectors
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    if np.any(det == 0.0):
        raise MeshError("degenerate (zero-area) cell")
    invT = np.empty_like(J)
    invT[:, 0, 0] = J[:, 1, 1] / det
    invT[:, 0, 1] = -J[:, 1, 0] / det
    invT[:, 1, 0] = -J[:, 0, 1] / det
    invT[:, 1, 1] = J[:, 0, 0] / det
    return J, det, invT


def structured_rectangle(nx: int, ny: int, x0=0.0, x1=1.0, y0=0.0, y1=1.0) -> Mesh:
    """Uniform grid of ``nx * ny`` rectangles, each cut lower-left to upper-right.

    Vertices are numbered lexicographically by (y, x); the two triangles of
    each grid square are numbered consecutively.
    """
    if nx < 1 or ny < 1:
        raise MeshError(f"grid size must be positive, got ({nx}, {ny})")
    if not (x1 > x0 and y1 > y0):
        raise MeshError("rectangle must have positive extent")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)  # row index = y
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    j, i = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    v00 = (j * (nx + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    cells = np.empty((2 * nx * ny, 3), dtype=np.int64)
    cells[0::2] = np.column_stack([v00, v10, v11])
    cells[1::2] = np.column_stack([v00, v11, v01])
    return Mesh.from_cells(vertices, cells)


def structured_unit_square(n: int) -> Mesh:
    """``n x n`` structured mesh of (0, 1)^2 with ``h_max = sqrt(2) / n``."""
    return structured_rectangle(n, n)


def refine_uniform(mesh: Mesh) -> Mesh:
    """Red refinement: split each cell into 4 by its edge midpoints.

    Children of cell ``c`` are cells ``4c .. 4c+3``. Vertices of the result
    are renumbered lexicographically by (y, x).
    """
    nv = mesh.n_vertices
    mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    vertices = np.vstack([mesh.vertices, mids])

    a, b, c = mesh.cells.T
    ma, mb, mc = (nv + mesh.cell_edges).T  # midpoint opposite a, b, c
    children = np.stack([
        np.column_stack([a, mc, mb]),
        np.column_stack([mc, b, ma]),
        np.column_stack([mb, ma, c]),
        np.column_stack([ma, mb, mc]),
    ], axis=1).reshape(-1, 3)

    order = np.lexsort((vertices[:, 0], vertices[:, 1]))
    new_id = np.empty_like(order)
    new_id[order] = np.arange(len(order))
    return Mesh.from_cells(vertices[order], new_id[children])


def read_mesh(path) -> Mesh:
    """Read the plain-text ``ntri-mesh 1`` format (0-based cell indices)."""
    tokens = Path(path).read_text().split()
    if " ".join(tokens[:2]) != MESH_FILE_HEADER:
        raise MeshError(f"{path}: missing '{MESH_FILE_HEADER}' header")
    try:
        pos = 2
        nv = int(tokens[pos]); pos += 1
        vertices = np.array(tokens[pos:pos + 2 * nv], dtype=float).reshape(nv, 2); pos += 2 * nv
        nc = int(tokens[pos]); pos += 1
        cells = np.array(tokens[pos:pos + 3 * nc], dtype=np.int64).reshape(nc, 3); pos += 3 * nc
    except (IndexError, ValueError) as exc:
        raise MeshError(f"{path}: malformed mesh file ({exc})") from exc
    if pos != len(tokens):
        raise MeshError(f"{path}: trailing data after cell list")
    return Mesh.from_cells(vertices, cells)


def write_mesh(mesh: Mesh, path) -> None:
    lines = [MESH_FILE_HEADER, str(mesh.n_vertices)]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines.append(str(mesh.n_cells))
    lines += [f"{i} {j} {k}" for i, j, k in mesh.cells.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")
