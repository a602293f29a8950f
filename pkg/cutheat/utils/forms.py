"""Assembly of the per-step Crank-Nicolson CutFEM system.

All matrices are assembled in the global DOF numbering of the background
space and restricted to the active DOFs at the end. The Nitsche term is the
one-sided consistency term only, so the system matrix is nonsymmetric.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .errors import ExtensionCoverageError, InvalidArgumentError
from .fespace import FEFunction, FESpace, shape_gradients, shape_values
from .geometry import ActiveMesh
from .linalg import SparseMatrix, assemble_sparse
from .quadrature import CutQuadrature, build_cut_quadrature, line_rule

logger = logging.getLogger(__name__)

SpaceTimeFn = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class FormParams:
    gamma_D: float
    gamma_g: float
    dt: float
    h: float

    def __post_init__(self) -> None:
        for name in ("gamma_D", "gamma_g", "dt", "h"):
            value = getattr(self, name)
            if not value > 0:
                raise InvalidArgumentError(f"{name} must be positive, got {value}")


@dataclass(frozen=True, eq=False)
class StepOperators:
    """Component matrices on one step's geometry, in global numbering.

    mass: (u, v) over Omega; stiffness: (grad u, grad v) over Omega;
    nitsche: (d_n u, v) over dOmega; boundary_mass: (u, v) over dOmega;
    ghost: the facet-jump form g over F_g.
    """

    active: ActiveMesh
    space: FESpace
    quad: CutQuadrature
    mass: SparseMatrix
    stiffness: SparseMatrix
    nitsche: SparseMatrix
    boundary_mass: SparseMatrix
    ghost: SparseMatrix


@dataclass(frozen=True, eq=False)
class AssembledSystem:
    """Linear system over the active DOFs; ``dofs[k]`` is the global index of unknown k."""

    matrix: SparseMatrix
    rhs: np.ndarray
    dofs: np.ndarray

    def expand(self, x: np.ndarray, n_dofs: int) -> np.ndarray:
        full = np.zeros(n_dofs)
        full[self.dofs] = x
        return full


def default_quad_degree(m: int) -> int:
    return 2 * m


def _local_triplets(dofs: np.ndarray, local: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = dofs.shape[1]
    rows = np.broadcast_to(dofs[:, :, None], (dofs.shape[0], n, n))
    cols = np.broadcast_to(dofs[:, None, :], (dofs.shape[0], n, n))
    return rows.ravel(), cols.ravel(), local.ravel()


def _combine(parts, n_dofs: int) -> SparseMatrix:
    parts = [p for p in parts if p[2].size]
    if not parts:
        return assemble_sparse(np.zeros(0, int), np.zeros(0, int), np.zeros(0), (n_dofs, n_dofs))
    rows = np.concatenate([p[0] for p in parts])
    cols = np.concatenate([p[1] for p in parts])
    vals = np.concatenate([p[2] for p in parts])
    return assemble_sparse(rows, cols, vals, (n_dofs, n_dofs))


def _volume_matrices(space: FESpace, quad: CutQuadrature) -> Tuple[SparseMatrix, SparseMatrix]:
    mesh = space.mesh
    m = space.degree
    rule = quad.rule
    mass_parts = []
    stiff_parts = []

    cells = quad.full_cells
    if cells.size:
        vals = shape_values(m, rule.points)
        mass_ref = np.einsum("q,qi,qj->ij", rule.weights, vals, vals)
        scale = 2.0 * mesh.cell_areas[cells]
        grads = np.einsum("cba,qib->cqia", mesh.inverse_jacobians[cells], shape_gradients(m, rule.points))
        stiff = np.einsum("q,cqia,cqja->cij", rule.weights, grads, grads) * scale[:, None, None]
        dofs = space.cell_dofs[cells]
        mass_parts.append(_local_triplets(dofs, scale[:, None, None] * mass_ref[None]))
        stiff_parts.append(_local_triplets(dofs, stiff))

    if quad.cut_weights.size:
        cells = quad.cut_cells
        vals = shape_values(m, quad.cut_ref)
        grads = space.physical_gradients(cells, quad.cut_ref)
        w = quad.cut_weights
        dofs = space.cell_dofs[cells]
        mass_parts.append(_local_triplets(dofs, np.einsum("p,pi,pj->pij", w, vals, vals)))
        stiff_parts.append(_local_triplets(dofs, np.einsum("p,pia,pja->pij", w, grads, grads)))

    return _combine(mass_parts, space.n_dofs), _combine(stiff_parts, space.n_dofs)


def _boundary_matrices(space: FESpace, quad: CutQuadrature) -> Tuple[SparseMatrix, SparseMatrix]:
    if quad.bnd_weights.size == 0:
        empty = _combine([], space.n_dofs)
        return empty, empty
    cells = quad.bnd_cells
    vals = shape_values(space.degree, quad.bnd_ref)
    dn = np.einsum("pia,pa->pi", space.physical_gradients(cells, quad.bnd_ref), quad.bnd_normals)
    w = quad.bnd_weights
    dofs = space.cell_dofs[cells]
    # Row = test function i, column = trial function j.
    nitsche = _local_triplets(dofs, np.einsum("p,pi,pj->pij", w, vals, dn))
    bmass = _local_triplets(dofs, np.einsum("p,pi,pj->pij", w, vals, vals))
    return _combine([nitsche], space.n_dofs), _combine([bmass], space.n_dofs)


def normal_derivative_jumps(space: FESpace, facets: np.ndarray, k: int, degree: int):
    """Jumps of the k-th normal derivative of both cells' local bases on ``facets``.

    Returns (jumps of shape (facets, points, 2*n_local), weights of shape
    (facets, points), dofs of shape (facets, 2*n_local)). The jump is the
    value from the lower-indexed cell minus the value from the other one,
    with the facet normal pointing out of the lower-indexed cell.
    """
    mesh = space.mesh
    rule = line_rule(degree)
    n_e, n_l = facets.size, rule.points.size
    ends = mesh.vertices[mesh.facets[facets]]
    pts = ends[:, 0, None, :] + rule.points[None, :, None] * (ends[:, 1] - ends[:, 0])[:, None, :]
    normals = mesh.facet_normals[facets]
    weights = mesh.facet_lengths[facets][:, None] * rule.weights[None, :]

    sides = []
    dofs = []
    for side in (0, 1):
        cells = mesh.facet_cells[facets, side]
        origin = mesh.vertices[mesh.cells[cells, 0]]
        ref = np.einsum("eab,elb->ela", mesh.inverse_jacobians[cells], pts - origin[:, None, :])
        flat_cells = np.repeat(cells, n_l)
        flat_ref = ref.reshape(-1, 2)
        nrm = np.repeat(normals, n_l, axis=0)
        if k == 1:
            d = np.einsum("pia,pa->pi", space.physical_gradients(flat_cells, flat_ref), nrm)
        elif k == 2:
            d = np.einsum("piab,pa,pb->pi", space.physical_hessians(flat_cells, flat_ref), nrm, nrm)
        else:
            raise InvalidArgumentError(f"jump derivative order must be 1 or 2, got {k}")
        sides.append(d.reshape(n_e, n_l, -1))
        dofs.append(space.cell_dofs[cells])
    jumps = np.concatenate([sides[0], -sides[1]], axis=-1)
    return jumps, weights, np.concatenate(dofs, axis=-1)


def assemble_ghost(active: ActiveMesh, space: FESpace, m: Optional[int] = None, *, h: Optional[float] = None) -> SparseMatrix:
    """Ghost-penalty matrix over F_g (without the gamma_g factor).

    G_ij = sum_e sum_{k=1..m} h^(2k-1)/(k!)^2 ∫_e [[d_n^k phi_j]] [[d_n^k phi_i]] ds.
    """
    m = space.degree if m is None else int(m)
    h = space.mesh.h if h is None else float(h)
    facets = active.f_g
    if facets.size == 0:
        return _combine([], space.n_dofs)
    parts = []
    for k in range(1, m + 1):
        jumps, weights, dofs = normal_derivative_jumps(space, facets, k, 2 * m)
        scale = h ** (2 * k - 1) / math.factorial(k) ** 2
        local = scale * np.einsum("el,eli,elj->eij", weights, jumps, jumps)
        parts.append(_local_triplets(dofs, local))
    return _combine(parts, space.n_dofs)


def ghost_energy(
    space: FESpace, active: ActiveMesh, v: np.ndarray, m: Optional[int] = None, *, h: Optional[float] = None
) -> float:
    """g(v, v) from the facet jumps of v; the jumps cancel per facet before squaring."""
    m = space.degree if m is None else int(m)
    h = space.mesh.h if h is None else float(h)
    facets = active.f_g
    if facets.size == 0:
        return 0.0
    v = np.asarray(v, dtype=float)
    total = 0.0
    for k in range(1, m + 1):
        jumps, weights, dofs = normal_derivative_jumps(space, facets, k, 2 * m)
        values = np.einsum("eli,ei->el", jumps, v[dofs])
        total += h ** (2 * k - 1) / math.factorial(k) ** 2 * float(np.sum(weights * values**2))
    return total


def assemble_operators(
    active: ActiveMesh, space: FESpace, *, quad_degree: Optional[int] = None, h: Optional[float] = None
) -> StepOperators:
    """All component matrices for one step's geometry."""
    degree = default_quad_degree(space.degree) if quad_degree is None else int(quad_degree)
    quad = build_cut_quadrature(active, degree)
    mass, stiffness = _volume_matrices(space, quad)
    nitsche, boundary_mass = _boundary_matrices(space, quad)
    ghost = assemble_ghost(active, space, h=h)
    return StepOperators(active, space, quad, mass, stiffness, nitsche, boundary_mass, ghost)


def assemble_bilinear(operators: StepOperators, params: FormParams) -> SparseMatrix:
    """A = M/dt + K/2 - N/2 + (gamma_D/h) B + gamma_g G in global numbering."""
    return (
        operators.mass / params.dt
        + 0.5 * operators.stiffness
        - 0.5 * operators.nitsche
        + (params.gamma_D / params.h) * operators.boundary_mass
        + params.gamma_g * operators.ghost
    ).tocsr()


def _load(space: FESpace, quad: CutQuadrature, values_fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    cells, ref, pts, weights = quad.volume(space.mesh)
    if weights.size == 0:
        return np.zeros(space.n_dofs)
    vals = shape_values(space.degree, ref)
    local = (weights * values_fn(pts))[:, None] * vals
    return np.bincount(space.cell_dofs[cells].ravel(), weights=local.ravel(), minlength=space.n_dofs)


def _boundary_load(space: FESpace, quad: CutQuadrature, values: np.ndarray) -> np.ndarray:
    if quad.bnd_weights.size == 0:
        return np.zeros(space.n_dofs)
    vals = shape_values(space.degree, quad.bnd_ref)
    local = (quad.bnd_weights * values)[:, None] * vals
    return np.bincount(space.cell_dofs[quad.bnd_cells].ravel(), weights=local.ravel(), minlength=space.n_dofs)


def check_previous_coverage(operators: StepOperators, u_prev: FEFunction) -> None:
    """Fail if an integral over Omega^n would read a DOF that was zero-filled in transfer."""
    if u_prev.zero_filled is None:
        return
    read = operators.space.physical_dofs(operators.active)
    bad = read & u_prev.zero_filled
    if bad.any():
        raise ExtensionCoverageError(
            f"{int(bad.sum())} zero-filled DOFs would be read on the domain at t={operators.active.t:.6g}",
            step=operators.active.step,
        )


def assemble_rhs(
    operators: StepOperators,
    params: FormParams,
    u_prev: FEFunction,
    f: SpaceTimeFn,
    g_bc: SpaceTimeFn,
    t_n: float,
) -> np.ndarray:
    """b = M u'/dt - (K u' - N u')/2 + (f^(n-1/2), v) + (gamma_D/h)(g(t_n), v)_dOmega, u' = u_prev."""
    check_previous_coverage(operators, u_prev)
    t_prev = t_n - params.dt
    c = u_prev.coefficients
    b = operators.mass @ c / params.dt - 0.5 * (operators.stiffness @ c - operators.nitsche @ c)
    b = b + _load(operators.space, operators.quad, lambda x: 0.5 * (f(x, t_n) + f(x, t_prev)))
    if operators.quad.bnd_weights.size:
        g = np.broadcast_to(g_bc(operators.quad.bnd_points, t_n), operators.quad.bnd_weights.shape)
        b = b + (params.gamma_D / params.h) * _boundary_load(operators.space, operators.quad, g)
    return b


def restrict(matrix: SparseMatrix, rhs: np.ndarray, mask: np.ndarray) -> AssembledSystem:
    dofs = np.flatnonzero(mask)
    return AssembledSystem(matrix=matrix[dofs][:, dofs].tocsr(), rhs=rhs[dofs], dofs=dofs)


def assemble_system(
    operators: StepOperators,
    params: FormParams,
    u_prev: FEFunction,
    f: SpaceTimeFn,
    g_bc: SpaceTimeFn,
    t_n: float,
) -> AssembledSystem:
    matrix = assemble_bilinear(operators, params)
    rhs = assemble_rhs(operators, params, u_prev, f, g_bc, t_n)
    return restrict(matrix, rhs, operators.space.active_dofs(operators.active))


def ritz_system(
    operators: StepOperators,
    params: FormParams,
    u0: Callable[[np.ndarray], np.ndarray],
    grad_u0: Callable[[np.ndarray], np.ndarray],
) -> AssembledSystem:
    """Projection of the initial value: (u,v)/dt + a(u,v) + penalties = same with the exact u0.

    a(u, v) = (grad u, grad v) - (d_n u, v)_dOmega. The Nitsche penalty
    appears on both sides; the ghost penalty only on the discrete side.
    """
    space, quad = operators.space, operators.quad
    gd = params.gamma_D / params.h
    matrix = (
        operators.mass / params.dt
        + operators.stiffness
        - operators.nitsche
        + gd * operators.boundary_mass
        + params.gamma_g * operators.ghost
    ).tocsr()

    cells, ref, pts, weights = quad.volume(space.mesh)
    vals = shape_values(space.degree, ref)
    grads = space.physical_gradients(cells, ref)
    local = (weights * u0(pts) / params.dt)[:, None] * vals
    local += weights[:, None] * np.einsum("pia,pa->pi", grads, grad_u0(pts))
    rhs = np.bincount(space.cell_dofs[cells].ravel(), weights=local.ravel(), minlength=space.n_dofs)
    if quad.bnd_weights.size:
        dn = np.einsum("pa,pa->p", grad_u0(quad.bnd_points), quad.bnd_normals)
        rhs -= _boundary_load(space, quad, dn)
        rhs += gd * _boundary_load(space, quad, u0(quad.bnd_points))
    return restrict(matrix, rhs, space.active_dofs(operators.active))


def energy(operators: StepOperators, params: FormParams, u_n: FEFunction, u_prev: FEFunction) -> float:
    """Squared discrete energy of (u_n, u_prev) on step-n geometry.

    1/2 |grad(u_n + u_prev)|^2 + |u_n - u_prev|^2/dt + (gamma_D/h)|u_n|^2_dOmega + gamma_g g(u_n, u_n).
    """
    a, b = u_n.coefficients, u_prev.coefficients
    s, d = a + b, a - b
    value = (
        0.5 * s @ (operators.stiffness @ s)
        + d @ (operators.mass @ d) / params.dt
        + (params.gamma_D / params.h) * a @ (operators.boundary_mass @ a)
        + params.gamma_g * ghost_energy(operators.space, operators.active, a)
    )
    return max(float(value), 0.0)


def energy_norm(operators: StepOperators, params: FormParams, u_n: FEFunction) -> float:
    """|||u_n||| = energy(u_n, 0) ** 0.5."""
    zero = FEFunction(u_n.space, np.zeros_like(u_n.coefficients), u_n.active_mask)
    return math.sqrt(energy(operators, params, u_n, zero))


__all__ = [
    "FormParams",
    "StepOperators",
    "AssembledSystem",
    "assemble_operators",
    "assemble_bilinear",
    "assemble_ghost",
    "ghost_energy",
    "assemble_rhs",
    "assemble_system",
    "ritz_system",
    "restrict",
    "energy",
    "energy_norm",
    "normal_derivative_jumps",
    "check_previous_coverage",
    "default_quad_degree",
]
