"""Continuous P1/P2 Lagrange spaces on the background mesh with per-step activity masks."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .errors import ExtensionCoverageError, InvalidArgumentError
from .geometry import ActiveMesh
from .mesh import LOCAL_EDGES, BackgroundMesh

SUPPORTED_DEGREES = (1, 2)

# Reference gradients of the barycentric coordinates (1-x-y, x, y).
_DLAMBDA = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])

# Reference nodes: vertices, then midpoints of LOCAL_EDGES.
REFERENCE_NODES = {
    1: np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
    2: np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]]),
}


def _barycentric(ref: np.ndarray) -> np.ndarray:
    ref = np.asarray(ref, dtype=float)
    return np.stack([1.0 - ref[..., 0] - ref[..., 1], ref[..., 0], ref[..., 1]], axis=-1)


def shape_values(degree: int, ref: np.ndarray) -> np.ndarray:
    """Basis values at reference points, shape (..., n_local)."""
    lam = _barycentric(ref)
    if degree == 1:
        return lam
    vertex = lam * (2.0 * lam - 1.0)
    edge = 4.0 * lam[..., LOCAL_EDGES[:, 0]] * lam[..., LOCAL_EDGES[:, 1]]
    return np.concatenate([vertex, edge], axis=-1)


def shape_gradients(degree: int, ref: np.ndarray) -> np.ndarray:
    """Reference gradients, shape (..., n_local, 2)."""
    lam = _barycentric(ref)
    if degree == 1:
        return np.broadcast_to(_DLAMBDA, lam.shape[:-1] + (3, 2)).copy()
    vertex = (4.0 * lam - 1.0)[..., None] * _DLAMBDA
    i, j = LOCAL_EDGES[:, 0], LOCAL_EDGES[:, 1]
    edge = 4.0 * (lam[..., j, None] * _DLAMBDA[i] + lam[..., i, None] * _DLAMBDA[j])
    return np.concatenate([vertex, edge], axis=-2)


def shape_hessians(degree: int, ref: np.ndarray) -> np.ndarray:
    """Reference Hessians, shape (..., n_local, 2, 2); constant per cell."""
    lead = np.asarray(ref).shape[:-1]
    if degree == 1:
        return np.zeros(lead + (3, 2, 2))
    outer = np.einsum("ia,jb->ijab", _DLAMBDA, _DLAMBDA)
    vertex = 4.0 * outer[[0, 1, 2], [0, 1, 2]]
    i, j = LOCAL_EDGES[:, 0], LOCAL_EDGES[:, 1]
    edge = 4.0 * (outer[i, j] + outer[j, i])
    hess = np.concatenate([vertex, edge], axis=0)
    return np.broadcast_to(hess, lead + hess.shape).copy()


@dataclass(frozen=True, eq=False)
class FESpace:
    """Global DOF numbering: vertices first, then one DOF per facet for P2."""

    mesh: BackgroundMesh
    degree: int
    cell_dofs: np.ndarray
    n_dofs: int

    @property
    def n_local(self) -> int:
        return int(self.cell_dofs.shape[1])

    @cached_property
    def dof_coordinates(self) -> np.ndarray:
        if self.degree == 1:
            return self.mesh.vertices
        return np.vstack([self.mesh.vertices, self.mesh.facet_midpoints])

    def cell_dof_mask(self, cells: np.ndarray) -> np.ndarray:
        mask = np.zeros(self.n_dofs, dtype=bool)
        mask[self.cell_dofs[np.asarray(cells, dtype=np.int64)].ravel()] = True
        return mask

    def active_dofs(self, active: ActiveMesh) -> np.ndarray:
        return self.cell_dof_mask(active.active_cells)

    def physical_dofs(self, active: ActiveMesh) -> np.ndarray:
        """DOFs read by integrals over Omega_h and dOmega_h at the active mesh's time."""
        return self.cell_dof_mask(active.physical_cells)

    def physical_gradients(self, cells: np.ndarray, ref: np.ndarray) -> np.ndarray:
        """Gradients in physical coordinates, shape (points, n_local, 2)."""
        inv = self.mesh.inverse_jacobians[cells]
        return np.einsum("pba,pib->pia", inv, shape_gradients(self.degree, ref))

    def physical_hessians(self, cells: np.ndarray, ref: np.ndarray) -> np.ndarray:
        inv = self.mesh.inverse_jacobians[cells]
        return np.einsum("pca,picd,pdb->piab", inv, shape_hessians(self.degree, ref), inv)


def build_space(mesh: BackgroundMesh, m: int) -> FESpace:
    if m not in SUPPORTED_DEGREES:
        raise InvalidArgumentError(f"unsupported polynomial degree {m}; expected 1 or 2")
    if m == 1:
        return FESpace(mesh=mesh, degree=1, cell_dofs=mesh.cells.copy(), n_dofs=mesh.n_vertices)
    cell_dofs = np.hstack([mesh.cells, mesh.n_vertices + mesh.cell_facets])
    return FESpace(mesh=mesh, degree=2, cell_dofs=cell_dofs, n_dofs=mesh.n_vertices + mesh.n_facets)


def eval_basis(space: FESpace, cell: int, ref_point: np.ndarray, k: int) -> np.ndarray:
    """Values (k=0), physical gradients (k=1) or Hessians (k=2) of the local basis."""
    if k not in (0, 1, 2):
        raise InvalidArgumentError(f"derivative order must be 0, 1 or 2, got {k}")
    ref = np.asarray(ref_point, dtype=float).reshape(1, 2)
    cells = np.array([int(cell)])
    if k == 0:
        return shape_values(space.degree, ref)[0]
    if k == 1:
        return space.physical_gradients(cells, ref)[0]
    return space.physical_hessians(cells, ref)[0]


@dataclass(frozen=True, eq=False)
class FEFunction:
    """Coefficients over all global DOFs; entries outside ``active_mask`` are zero.

    ``zero_filled`` marks DOFs that became active in a transfer and carry no
    history; integrals over Omega must never read them.
    """

    space: FESpace
    coefficients: np.ndarray
    active_mask: np.ndarray
    zero_filled: Optional[np.ndarray] = field(default=None)

    def local(self, cells: np.ndarray) -> np.ndarray:
        return self.coefficients[self.space.cell_dofs[cells]]

    def values(self, cells: np.ndarray, ref: np.ndarray) -> np.ndarray:
        return np.einsum("pi,pi->p", shape_values(self.space.degree, ref), self.local(cells))

    def gradients(self, cells: np.ndarray, ref: np.ndarray) -> np.ndarray:
        return np.einsum("pia,pi->pa", self.space.physical_gradients(cells, ref), self.local(cells))

    def __sub__(self, other: "FEFunction") -> "FEFunction":
        return replace(
            self,
            coefficients=self.coefficients - other.coefficients,
            active_mask=self.active_mask | other.active_mask,
            zero_filled=None,
        )


def zero_function(space: FESpace, active: ActiveMesh) -> FEFunction:
    return FEFunction(space, np.zeros(space.n_dofs), space.active_dofs(active))


def interpolate(space: FESpace, active: ActiveMesh, u: Callable[[np.ndarray], np.ndarray]) -> FEFunction:
    """Nodal interpolation of ``u`` on the DOFs of active cells."""
    mask = space.active_dofs(active)
    coeffs = np.zeros(space.n_dofs)
    values = np.broadcast_to(np.asarray(u(space.dof_coordinates[mask]), dtype=float), (int(mask.sum()),))
    coeffs[mask] = values
    return FEFunction(space, coeffs, mask)


def transfer(prev: FEFunction, new_active: ActiveMesh) -> FEFunction:
    """Carry coefficients onto the next active set; newly active DOFs start at zero."""
    space = prev.space
    mask = space.active_dofs(new_active)
    needed = space.physical_dofs(new_active)
    missing = needed & ~prev.active_mask
    if missing.any():
        cells = np.flatnonzero(missing[space.cell_dofs].any(axis=1) & np.isin(
            np.arange(space.mesh.n_cells), new_active.physical_cells))
        raise ExtensionCoverageError(
            f"{int(missing.sum())} DOFs needed on the domain at t={new_active.t:.6g} carry no previous value",
            step=new_active.step,
            cells=cells,
        )
    keep = mask & prev.active_mask
    coeffs = np.where(keep, prev.coefficients, 0.0)
    return FEFunction(space, coeffs, mask, zero_filled=mask & ~prev.active_mask)


__all__ = [
    "FESpace",
    "FEFunction",
    "build_space",
    "eval_basis",
    "interpolate",
    "transfer",
    "zero_function",
    "shape_values",
    "shape_gradients",
    "shape_hessians",
    "REFERENCE_NODES",
]
