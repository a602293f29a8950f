"""Level-set description of the moving domain and per-step active meshes."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .errors import ExtensionCoverageError, InvalidArgumentError
from .mesh import BackgroundMesh

logger = logging.getLogger(__name__)

LevelSet = Callable[[np.ndarray, float], np.ndarray]

DELTA_FACTOR = 4.0
SAMPLES_PER_CELL = 7


class CellClass(IntEnum):
    INSIDE = 0
    CUT = 1
    STRIP = 2
    OUTSIDE = 3


@dataclass(frozen=True)
class MovingDomain:
    """Omega(t) = {phi(x, t) <= 0}.

    ``distance`` is an optional signed distance with the same zero set. It is
    what gets compared against delta when building the extension band; without
    it, phi is used directly.
    """

    phi: LevelSet
    w_max: float
    description: str = ""
    distance: Optional[LevelSet] = None

    def signed_distance(self, x: np.ndarray, t: float) -> np.ndarray:
        fn = self.distance if self.distance is not None else self.phi
        return np.asarray(fn(x, t), dtype=float)

    def gradient(self, x: np.ndarray, t: float, eps: float = 1e-6) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        ex = np.array([eps, 0.0])
        ey = np.array([0.0, eps])
        gx = (self.phi(x + ex, t) - self.phi(x - ex, t)) / (2 * eps)
        gy = (self.phi(x + ey, t) - self.phi(x - ey, t)) / (2 * eps)
        return np.stack([gx, gy], axis=-1)

    def boundary_points(self, t: float, n: int, rng: np.random.Generator, box=(0.0, 0.0, 1.0, 1.0)) -> np.ndarray:
        """Random points projected onto Gamma(t) by Newton steps along grad phi."""
        x0, y0, x1, y1 = box
        pts = np.column_stack([rng.uniform(x0, x1, n), rng.uniform(y0, y1, n)])
        for _ in range(50):
            grad = self.gradient(pts, t)
            val = self.phi(pts, t)
            pts = pts - (val / np.maximum(np.einsum("ij,ij->i", grad, grad), 1e-300))[:, None] * grad
        return pts[np.abs(self.phi(pts, t)) < 1e-10]

    def normal_speed(self, x: np.ndarray, t: float, dt: float = 1e-6) -> np.ndarray:
        """|phi_t| / |grad phi| at boundary points."""
        phi_t = (self.phi(x, t + dt) - self.phi(x, t - dt)) / (2 * dt)
        return np.abs(phi_t) / np.linalg.norm(self.gradient(x, t), axis=-1)


def delta_default(dt: float, factor: float = DELTA_FACTOR) -> float:
    """Width of the extension band, ``factor * dt`` (4 dt by default)."""
    if not dt > 0:
        raise InvalidArgumentError(f"time step must be positive, got {dt}")
    return float(factor) * float(dt)


def sample_points(mesh: BackgroundMesh) -> np.ndarray:
    """The 7 classification points per cell: vertices, edge midpoints, centroid."""
    return np.concatenate(
        [
            mesh.vertices[mesh.cells],
            mesh.facet_midpoints[mesh.cell_facets],
            mesh.centroids[:, None, :],
        ],
        axis=1,
    )


def _sample_values(mesh: BackgroundMesh, fn: LevelSet, t: float) -> np.ndarray:
    v = np.asarray(fn(mesh.vertices, t), dtype=float)
    m = np.asarray(fn(mesh.facet_midpoints, t), dtype=float)
    c = np.asarray(fn(mesh.centroids, t), dtype=float)
    return np.concatenate([v[mesh.cells], m[mesh.cell_facets], c[:, None]], axis=1)


def _classify(samples: np.ndarray, distances: np.ndarray, delta: float) -> np.ndarray:
    inside = samples <= 0.0
    any_in = inside.any(axis=1)
    all_in = inside.all(axis=1)
    classes = np.full(samples.shape[0], CellClass.OUTSIDE, dtype=np.int8)
    classes[any_in & ~all_in] = CellClass.CUT
    classes[all_in] = CellClass.INSIDE
    band = ~any_in & (distances.min(axis=1) <= delta)
    classes[band] = CellClass.STRIP
    return classes


def classify_cells(mesh: BackgroundMesh, domain: MovingDomain, t: float, delta: float) -> np.ndarray:
    """Per-cell CellClass codes at time ``t`` for band width ``delta``."""
    if delta < 0:
        raise InvalidArgumentError(f"delta must be nonnegative, got {delta}")
    samples = _sample_values(mesh, domain.phi, t)
    distances = samples if domain.distance is None else _sample_values(mesh, domain.distance, t)
    return _classify(samples, distances, delta)


@dataclass(frozen=True, eq=False)
class ActiveMesh:
    """Active triangulation and facet sets of one time step."""

    mesh: BackgroundMesh
    step: int
    t: float
    delta: float
    classes: np.ndarray
    samples: np.ndarray
    vertex_phi: np.ndarray
    f_int: np.ndarray
    f_cut: np.ndarray
    f_ext: np.ndarray
    strip_cells: Optional[np.ndarray] = None

    @cached_property
    def active_cells(self) -> np.ndarray:
        return np.flatnonzero(self.classes != CellClass.OUTSIDE)

    @cached_property
    def active_mask(self) -> np.ndarray:
        return self.classes != CellClass.OUTSIDE

    @cached_property
    def f_g(self) -> np.ndarray:
        return np.union1d(self.f_cut, self.f_ext)

    @cached_property
    def physical_cells(self) -> np.ndarray:
        """Cells whose linear reconstruction of Omega is nonempty."""
        return np.flatnonzero((self.vertex_phi[self.mesh.cells] <= 0.0).any(axis=1))

    @cached_property
    def cut_cells(self) -> np.ndarray:
        """Physical cells that are not entirely inside the linear reconstruction."""
        neg = self.vertex_phi[self.mesh.cells] <= 0.0
        return np.flatnonzero(neg.any(axis=1) & ~neg.all(axis=1))

    @cached_property
    def full_cells(self) -> np.ndarray:
        return np.flatnonzero((self.vertex_phi[self.mesh.cells] <= 0.0).all(axis=1))

    @cached_property
    def boundary_box_facets(self) -> np.ndarray:
        """Box-boundary facets whose cell reaches into Omega_h."""
        facets = self.mesh.boundary_facets
        touch = (self.vertex_phi[self.mesh.facets[facets]] <= 0.0).any(axis=1)
        return facets[touch]

    def counts(self) -> dict:
        return {
            int(c): int(np.count_nonzero(self.classes == c)) for c in CellClass
        }


def build_active_mesh(
    mesh: BackgroundMesh,
    domain: MovingDomain,
    t: float,
    delta: float,
    prev: Optional[ActiveMesh] = None,
    *,
    step: int = 0,
) -> ActiveMesh:
    """Classify cells at ``t`` and split the active interior facets into F_int/F_cut/F_ext."""
    if delta < 0:
        raise InvalidArgumentError(f"delta must be nonnegative, got {delta}")
    samples = _sample_values(mesh, domain.phi, t)
    distances = samples if domain.distance is None else _sample_values(mesh, domain.distance, t)
    classes = _classify(samples, distances, delta)

    if prev is not None:
        needed = (classes == CellClass.INSIDE) | (classes == CellClass.CUT)
        missing = np.flatnonzero(needed & ~prev.active_mask)
        if missing.size:
            raise ExtensionCoverageError(
                f"{missing.size} cells intersecting the domain at t={t:.6g} were not active at the "
                f"previous step (delta={delta:.4g} too small for the time step)",
                step=step,
                cells=missing,
            )

    active = classes != CellClass.OUTSIDE
    interior = mesh.interior_facets
    c0 = mesh.facet_cells[interior, 0]
    c1 = mesh.facet_cells[interior, 1]
    both_active = active[c0] & active[c1]
    facets = interior[both_active]
    k0 = classes[c0[both_active]]
    k1 = classes[c1[both_active]]
    is_cut = (k0 == CellClass.CUT) | (k1 == CellClass.CUT)
    is_int = (k0 == CellClass.INSIDE) & (k1 == CellClass.INSIDE)
    f_cut = facets[is_cut]
    f_int = facets[is_int]
    f_ext = facets[~is_cut & ~is_int]

    strip_cells = None
    if prev is not None:
        entered = ((samples <= 0.0) & (prev.samples > 0.0)).any(axis=1)
        strip_cells = np.flatnonzero(entered & active)

    vertex_phi = np.asarray(domain.phi(mesh.vertices, t), dtype=float)
    logger.debug(
        "active mesh t=%.6g: %d active cells, |F_int|=%d |F_cut|=%d |F_ext|=%d",
        t, int(active.sum()), f_int.size, f_cut.size, f_ext.size,
    )
    return ActiveMesh(
        mesh=mesh,
        step=step,
        t=float(t),
        delta=float(delta),
        classes=classes,
        samples=samples,
        vertex_phi=vertex_phi,
        f_int=f_int,
        f_cut=f_cut,
        f_ext=f_ext,
        strip_cells=strip_cells,
    )


__all__ = [
    "CellClass",
    "MovingDomain",
    "ActiveMesh",
    "classify_cells",
    "build_active_mesh",
    "delta_default",
    "sample_points",
    "DELTA_FACTOR",
]
