"""Background triangulations of an axis-aligned box."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Tuple

import numpy as np

from .errors import InvalidArgumentError

Box = Tuple[float, float, float, float]

UNIT_SQUARE: Box = (0.0, 0.0, 1.0, 1.0)

# Local edge (i, j) of a cell; the P2 edge DOFs follow this order.
LOCAL_EDGES = np.array([[0, 1], [1, 2], [2, 0]], dtype=np.int64)


@dataclass(frozen=True, eq=False)
class BackgroundMesh:
    """Fixed simplicial triangulation with facet adjacency.

    ``facet_cells[f]`` holds the incident cells of facet ``f`` in increasing
    order, with ``-1`` in the second slot on the box boundary. Facet normals
    point outward from the first (lower-indexed) incident cell.
    """

    vertices: np.ndarray
    cells: np.ndarray
    facets: np.ndarray
    facet_cells: np.ndarray
    cell_facets: np.ndarray
    h: float
    box: Box
    dim: int = 2

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def n_cells(self) -> int:
        return int(self.cells.shape[0])

    @property
    def n_facets(self) -> int:
        return int(self.facets.shape[0])

    @cached_property
    def jacobians(self) -> np.ndarray:
        """Affine maps of the reference triangle, shape (cells, 2, 2)."""
        p = self.vertices[self.cells]
        return np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)

    @cached_property
    def inverse_jacobians(self) -> np.ndarray:
        return np.linalg.inv(self.jacobians)

    @cached_property
    def cell_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.det(self.jacobians)

    @cached_property
    def cell_diameters(self) -> np.ndarray:
        p = self.vertices[self.cells]
        lengths = np.linalg.norm(p[:, LOCAL_EDGES[:, 1]] - p[:, LOCAL_EDGES[:, 0]], axis=2)
        return lengths.max(axis=1)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.cells].mean(axis=1)

    @cached_property
    def interior_facets(self) -> np.ndarray:
        return np.flatnonzero(self.facet_cells[:, 1] >= 0)

    @cached_property
    def boundary_facets(self) -> np.ndarray:
        return np.flatnonzero(self.facet_cells[:, 1] < 0)

    @cached_property
    def facet_lengths(self) -> np.ndarray:
        p = self.vertices[self.facets]
        return np.linalg.norm(p[:, 1] - p[:, 0], axis=1)

    @cached_property
    def facet_midpoints(self) -> np.ndarray:
        return self.vertices[self.facets].mean(axis=1)

    @cached_property
    def facet_normals(self) -> np.ndarray:
        p = self.vertices[self.facets]
        tangent = p[:, 1] - p[:, 0]
        normal = np.stack([tangent[:, 1], -tangent[:, 0]], axis=1)
        normal /= np.linalg.norm(normal, axis=1)[:, None]
        away = self.facet_midpoints - self.centroids[self.facet_cells[:, 0]]
        flip = np.einsum("ij,ij->i", normal, away) < 0.0
        normal[flip] *= -1.0
        return normal

    def facet_geometry(self, facet: int) -> Tuple[np.ndarray, float, np.ndarray]:
        """Return (unit normal, length, midpoint) of ``facet``."""
        if not 0 <= int(facet) < self.n_facets:
            raise InvalidArgumentError(f"facet index {facet} out of range [0, {self.n_facets})")
        f = int(facet)
        return self.facet_normals[f].copy(), float(self.facet_lengths[f]), self.facet_midpoints[f].copy()


def _build_topology(vertices: np.ndarray, cells: np.ndarray, box: Box) -> BackgroundMesh:
    n_cells = cells.shape[0]
    edges = np.sort(cells[:, LOCAL_EDGES], axis=2).reshape(-1, 2)
    facets, inverse = np.unique(edges, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    counts = np.bincount(inverse, minlength=facets.shape[0])
    if np.any(counts > 2):
        raise InvalidArgumentError("non-manifold triangulation: facet shared by more than two cells")

    order = np.argsort(inverse, kind="stable")
    owner = order // 3
    starts = np.cumsum(counts) - counts
    facet_cells = np.full((facets.shape[0], 2), -1, dtype=np.int64)
    facet_cells[:, 0] = owner[starts]
    shared = counts == 2
    facet_cells[shared, 1] = owner[starts[shared] + 1]

    p = vertices[cells]
    lengths = np.linalg.norm(p[:, LOCAL_EDGES[:, 1]] - p[:, LOCAL_EDGES[:, 0]], axis=2)
    return BackgroundMesh(
        vertices=vertices,
        cells=cells,
        facets=facets.astype(np.int64),
        facet_cells=facet_cells,
        cell_facets=inverse.reshape(n_cells, 3).astype(np.int64),
        h=float(lengths.max()),
        box=box,
    )


def build_uniform_mesh(box: Box, n: int) -> BackgroundMesh:
    """Split an n-by-n grid of rectangles along the bottom-left/top-right diagonal."""
    x0, y0, x1, y1 = (float(v) for v in box)
    if int(n) != n or n < 1:
        raise InvalidArgumentError(f"subdivision count must be a positive integer, got {n}")
    if not (x1 > x0 and y1 > y0):
        raise InvalidArgumentError(f"degenerate box {box}")
    n = int(n)

    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([gx.ravel(), gy.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    a = (i + j * (n + 1)).ravel()
    b = a + 1
    c = a + n + 2
    d = a + n + 1
    lower = np.column_stack([a, b, c])
    upper = np.column_stack([a, c, d])
    cells = np.stack([lower, upper], axis=1).reshape(-1, 3).astype(np.int64)
    return _build_topology(vertices, cells, (x0, y0, x1, y1))


def refine_uniform(mesh: BackgroundMesh) -> BackgroundMesh:
    """Split every cell into four congruent children through its edge midpoints."""
    midpoints = mesh.facet_midpoints
    vertices = np.vstack([mesh.vertices, midpoints])
    offset = mesh.n_vertices
    v0, v1, v2 = mesh.cells[:, 0], mesh.cells[:, 1], mesh.cells[:, 2]
    m01 = offset + mesh.cell_facets[:, 0]
    m12 = offset + mesh.cell_facets[:, 1]
    m20 = offset + mesh.cell_facets[:, 2]
    children = np.stack(
        [
            np.column_stack([v0, m01, m20]),
            np.column_stack([m01, v1, m12]),
            np.column_stack([m20, m12, v2]),
            np.column_stack([m01, m12, m20]),
        ],
        axis=1,
    ).reshape(-1, 3)
    return _build_topology(vertices, children.astype(np.int64), mesh.box)


def mesh_for_size(box: Box, h_target: float) -> BackgroundMesh:
    """Uniform mesh whose grid spacing along x is ``h_target`` (e.g. 1/32)."""
    width = float(box[2]) - float(box[0])
    n = int(round(width / float(h_target)))
    if n < 1:
        raise InvalidArgumentError(f"mesh size {h_target} larger than the box")
    return build_uniform_mesh(box, n)


__all__ = [
    "Box",
    "UNIT_SQUARE",
    "LOCAL_EDGES",
    "BackgroundMesh",
    "build_uniform_mesh",
    "refine_uniform",
    "mesh_for_size",
]
