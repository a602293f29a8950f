"""Quadrature rules and cut-cell integration on the linearly reconstructed domain."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, List, Tuple

import numpy as np

from .errors import InvalidArgumentError
from .geometry import ActiveMesh

MAX_DEGREE = 6


@dataclass(frozen=True)
class QuadRule:
    """Points on the reference triangle (0,0),(1,0),(0,1); weights sum to 1/2."""

    points: np.ndarray
    weights: np.ndarray
    degree: int


@dataclass(frozen=True)
class LineRule:
    """Gauss-Legendre points on [0, 1]; weights sum to 1."""

    points: np.ndarray
    weights: np.ndarray
    degree: int


@lru_cache(maxsize=None)
def gauss_line(n_points: int) -> LineRule:
    """Gauss rule with ``n_points`` nodes, exact up to degree 2*n_points - 1."""
    if n_points < 1:
        raise InvalidArgumentError(f"need at least one Gauss point, got {n_points}")
    x, w = np.polynomial.legendre.leggauss(n_points)
    return LineRule(points=0.5 * (x + 1.0), weights=0.5 * w, degree=2 * n_points - 1)


def line_rule(degree: int) -> LineRule:
    return gauss_line(max(1, math.ceil((degree + 1) / 2)))


@lru_cache(maxsize=None)
def reference_rule(degree: int) -> QuadRule:
    """Triangle rule exact for polynomials of total degree ``degree``."""
    if int(degree) != degree or not 1 <= degree <= MAX_DEGREE:
        raise InvalidArgumentError(f"unsupported quadrature degree {degree} (1..{MAX_DEGREE})")
    if degree == 1:
        return QuadRule(np.array([[1.0 / 3.0, 1.0 / 3.0]]), np.array([0.5]), 1)
    if degree == 2:
        pts = np.array([[1.0 / 6.0, 1.0 / 6.0], [2.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 2.0 / 3.0]])
        return QuadRule(pts, np.full(3, 1.0 / 6.0), 2)
    # Collapsed (Duffy) tensor Gauss rule; the (1 - xi) Jacobian adds one degree in xi.
    line = gauss_line(math.ceil((degree + 2) / 2))
    s, ws = line.points, line.weights
    xi = np.repeat(s, s.size)
    eta = np.tile(s, s.size) * (1.0 - xi)
    weights = np.outer(ws, ws).ravel() * (1.0 - xi)
    return QuadRule(np.column_stack([xi, eta]), weights, int(degree))


@dataclass(frozen=True)
class CutCellGeometry:
    """Linear reconstruction of K ∩ Omega and K ∩ Gamma for one cell."""

    interior_subtris: np.ndarray
    segments: np.ndarray
    normals: np.ndarray

    @property
    def boundary_segments(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        return [(seg, n) for seg, n in zip(self.segments, self.normals)]

    @property
    def interior_area(self) -> float:
        return float(np.sum(_triangle_areas(self.interior_subtris))) if len(self.interior_subtris) else 0.0


def _triangle_areas(tris: np.ndarray) -> np.ndarray:
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _edge_point(xa: np.ndarray, xb: np.ndarray, pa: float, pb: float) -> np.ndarray:
    s = pa / (pa - pb)
    return xa + s * (xb - xa)


_EMPTY_TRIS = np.zeros((0, 3, 2))
_EMPTY_SEGS = np.zeros((0, 2, 2))
_EMPTY_NORMALS = np.zeros((0, 2))


def cut_triangle(vertices: np.ndarray, phi_vals: np.ndarray) -> CutCellGeometry:
    """Marching-triangles split of a cell by the linear interpolant of phi.

    Zero values count as inside. A quadrilateral inside part is split along
    the diagonal starting at its first listed corner.
    """
    x = np.asarray(vertices, dtype=float).reshape(3, 2)
    phi = np.asarray(phi_vals, dtype=float).reshape(3)
    jac = np.column_stack([x[1] - x[0], x[2] - x[0]])
    det = float(np.linalg.det(jac))
    if abs(det) <= 1e-300:
        raise InvalidArgumentError("degenerate triangle")
    neg = phi <= 0.0
    count = int(neg.sum())
    if count == 0:
        return CutCellGeometry(_EMPTY_TRIS, _EMPTY_SEGS, _EMPTY_NORMALS)
    if count == 3:
        return CutCellGeometry(x[None, :, :].copy(), _EMPTY_SEGS, _EMPTY_NORMALS)

    lone = int(np.flatnonzero(neg)[0]) if count == 1 else int(np.flatnonzero(~neg)[0])
    a, b, c = lone, (lone + 1) % 3, (lone + 2) % 3
    p_ab = _edge_point(x[a], x[b], phi[a], phi[b])
    p_ac = _edge_point(x[a], x[c], phi[a], phi[c])
    if count == 1:
        tris = np.array([[x[a], p_ab, p_ac]])
    else:
        tris = np.array([[p_ab, x[b], x[c]], [p_ab, x[c], p_ac]])
    areas = _triangle_areas(tris)
    tris = tris[areas > 1e-14 * abs(0.5 * det)]

    grad = np.linalg.solve(jac.T, np.array([phi[1] - phi[0], phi[2] - phi[0]]))
    segment = np.array([p_ab, p_ac])
    norm = float(np.linalg.norm(grad))
    if norm == 0.0 or np.linalg.norm(p_ac - p_ab) <= 1e-14 * math.sqrt(abs(det)):
        return CutCellGeometry(tris, _EMPTY_SEGS, _EMPTY_NORMALS)
    return CutCellGeometry(tris, segment[None], (grad / norm)[None])


@dataclass(frozen=True, eq=False)
class CutQuadrature:
    """Quadrature on Omega_h and dOmega_h for one active mesh.

    Cells entirely inside Omega_h (``full_cells``) use ``rule`` mapped
    affinely; all other point sets are stored flat with their parent cell,
    reference coordinates in that cell, physical points and weights.
    """

    degree: int
    rule: QuadRule
    full_cells: np.ndarray
    cut_cells: np.ndarray
    cut_ref: np.ndarray
    cut_points: np.ndarray
    cut_weights: np.ndarray
    bnd_cells: np.ndarray
    bnd_ref: np.ndarray
    bnd_points: np.ndarray
    bnd_weights: np.ndarray
    bnd_normals: np.ndarray

    def full_points(self, mesh) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        n_q = self.rule.weights.size
        cells = np.repeat(self.full_cells, n_q)
        ref = np.tile(self.rule.points, (self.full_cells.size, 1))
        origin = mesh.vertices[mesh.cells[self.full_cells, 0]]
        jac = mesh.jacobians[self.full_cells]
        pts = origin[:, None, :] + np.einsum("cab,qb->cqa", jac, self.rule.points)
        weights = (2.0 * mesh.cell_areas[self.full_cells])[:, None] * self.rule.weights[None, :]
        return cells, ref, pts.reshape(-1, 2), weights.ravel()

    def volume(self, mesh) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """All volume points as (cells, reference points, physical points, weights)."""
        cells, ref, pts, weights = self.full_points(mesh)
        return (
            np.concatenate([cells, self.cut_cells]),
            np.concatenate([ref, self.cut_ref]),
            np.concatenate([pts, self.cut_points]),
            np.concatenate([weights, self.cut_weights]),
        )


def _to_reference(mesh, cell: int, pts: np.ndarray) -> np.ndarray:
    origin = mesh.vertices[mesh.cells[cell, 0]]
    return (pts - origin) @ mesh.inverse_jacobians[cell].T


def build_cut_quadrature(active: ActiveMesh, degree: int, *, include_box: bool = True) -> CutQuadrature:
    """Volume and boundary quadrature of degree ``degree`` on the reconstructed domain.

    With ``include_box`` the boundary also covers the parts of the box edges
    where Omega_h reaches the box; otherwise only the interface Gamma_h.
    """
    mesh = active.mesh
    rule = reference_rule(degree)
    lrule = line_rule(degree)

    v_cells: List[np.ndarray] = []
    v_ref: List[np.ndarray] = []
    v_pts: List[np.ndarray] = []
    v_w: List[np.ndarray] = []
    b_cells: List[np.ndarray] = []
    b_ref: List[np.ndarray] = []
    b_pts: List[np.ndarray] = []
    b_w: List[np.ndarray] = []
    b_n: List[np.ndarray] = []

    for cell in active.cut_cells:
        verts = mesh.vertices[mesh.cells[cell]]
        geo = cut_triangle(verts, active.vertex_phi[mesh.cells[cell]])
        if len(geo.interior_subtris):
            tris = geo.interior_subtris
            jac = np.stack([tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0]], axis=2)
            pts = (tris[:, 0][:, None, :] + np.einsum("sab,qb->sqa", jac, rule.points)).reshape(-1, 2)
            w = (2.0 * _triangle_areas(tris))[:, None] * rule.weights[None, :]
            v_cells.append(np.full(pts.shape[0], cell, dtype=np.int64))
            v_ref.append(_to_reference(mesh, cell, pts))
            v_pts.append(pts)
            v_w.append(w.ravel())
        for seg, normal in zip(geo.segments, geo.normals):
            pts = seg[0][None, :] + lrule.points[:, None] * (seg[1] - seg[0])[None, :]
            length = float(np.linalg.norm(seg[1] - seg[0]))
            b_cells.append(np.full(pts.shape[0], cell, dtype=np.int64))
            b_ref.append(_to_reference(mesh, cell, pts))
            b_pts.append(pts)
            b_w.append(lrule.weights * length)
            b_n.append(np.tile(normal, (pts.shape[0], 1)))

    # Parts of the box boundary that bound Omega_h.
    for facet in (active.boundary_box_facets if include_box else ()):
        cell = int(mesh.facet_cells[facet, 0])
        ends = mesh.vertices[mesh.facets[facet]]
        vals = active.vertex_phi[mesh.facets[facet]]
        if vals[0] > 0.0:
            ends = np.array([_edge_point(ends[1], ends[0], vals[1], vals[0]), ends[1]])
        elif vals[1] > 0.0:
            ends = np.array([ends[0], _edge_point(ends[0], ends[1], vals[0], vals[1])])
        length = float(np.linalg.norm(ends[1] - ends[0]))
        if length <= 0.0:
            continue
        pts = ends[0][None, :] + lrule.points[:, None] * (ends[1] - ends[0])[None, :]
        b_cells.append(np.full(pts.shape[0], cell, dtype=np.int64))
        b_ref.append(_to_reference(mesh, cell, pts))
        b_pts.append(pts)
        b_w.append(lrule.weights * length)
        b_n.append(np.tile(mesh.facet_normals[facet], (pts.shape[0], 1)))

    def _cat(parts: List[np.ndarray], shape: Tuple[int, ...], dtype=float) -> np.ndarray:
        return np.concatenate(parts) if parts else np.zeros(shape, dtype=dtype)

    return CutQuadrature(
        degree=int(degree),
        rule=rule,
        full_cells=active.full_cells,
        cut_cells=_cat(v_cells, (0,), np.int64),
        cut_ref=_cat(v_ref, (0, 2)),
        cut_points=_cat(v_pts, (0, 2)),
        cut_weights=_cat(v_w, (0,)),
        bnd_cells=_cat(b_cells, (0,), np.int64),
        bnd_ref=_cat(b_ref, (0, 2)),
        bnd_points=_cat(b_pts, (0, 2)),
        bnd_weights=_cat(b_w, (0,)),
        bnd_normals=_cat(b_n, (0, 2)),
    )


def integrate_cut_volume(active: ActiveMesh, f: Callable[[np.ndarray], np.ndarray], *, degree: int = 2) -> float:
    """Integral of ``f`` over the reconstructed Omega_h at the active mesh's time."""
    quad = build_cut_quadrature(active, degree)
    _, _, pts, weights = quad.volume(active.mesh)
    return float(np.dot(weights, np.broadcast_to(f(pts), weights.shape)))


def integrate_cut_boundary(
    active: ActiveMesh,
    f: Callable[..., np.ndarray],
    *,
    degree: int = 2,
    with_normals: bool = False,
    include_box: bool = True,
) -> float:
    """Integral of ``f`` over the reconstructed dOmega_h; ``f(x, n)`` if ``with_normals``."""
    quad = build_cut_quadrature(active, degree, include_box=include_box)
    if quad.bnd_weights.size == 0:
        return 0.0
    values = f(quad.bnd_points, quad.bnd_normals) if with_normals else f(quad.bnd_points)
    return float(np.dot(quad.bnd_weights, np.broadcast_to(values, quad.bnd_weights.shape)))


__all__ = [
    "QuadRule",
    "LineRule",
    "CutCellGeometry",
    "CutQuadrature",
    "reference_rule",
    "gauss_line",
    "line_rule",
    "cut_triangle",
    "build_cut_quadrature",
    "integrate_cut_volume",
    "integrate_cut_boundary",
]
