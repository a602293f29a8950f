"""Sparse storage and nonsymmetric linear solves."""
from __future__ import annotations

import logging
import math
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidArgumentError, SolverDivergence

logger = logging.getLogger(__name__)

SparseMatrix = sp.csr_matrix

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 500
SOLVERS = ("direct", "gmres", "bicgstab")


def assemble_sparse(
    rows: np.ndarray, cols: np.ndarray, values: np.ndarray, shape: Tuple[int, int]
) -> SparseMatrix:
    """Consolidate (row, col, value) triplets; duplicates are summed."""
    matrix = sp.coo_matrix(
        (np.asarray(values, dtype=float).ravel(), (np.asarray(rows).ravel(), np.asarray(cols).ravel())),
        shape=shape,
    ).tocsr()
    matrix.sum_duplicates()
    matrix.sort_indices()
    return matrix


def relative_residual(A: SparseMatrix, x: np.ndarray, b: np.ndarray) -> float:
    norm_b = float(np.linalg.norm(b))
    res = float(np.linalg.norm(A @ x - b))
    return res / norm_b if norm_b > 0.0 else res


def _direct(A: SparseMatrix, b: np.ndarray, tol: float, refinements: int = 3) -> Tuple[np.ndarray, float]:
    try:
        lu = spla.splu(sp.csc_matrix(A))
    except RuntimeError as exc:
        raise SolverDivergence(f"direct factorization failed: {exc}", residual=math.inf, iterations=0) from exc
    x = lu.solve(b)
    residual = relative_residual(A, x, b)
    for _ in range(refinements):
        if residual <= tol:
            break
        x = x + lu.solve(b - A @ x)
        residual = relative_residual(A, x, b)
    return x, residual


def _krylov(
    A: SparseMatrix, b: np.ndarray, tol: float, max_iter: int, method: str, x0: Optional[np.ndarray]
) -> Tuple[np.ndarray, float]:
    try:
        ilu = spla.spilu(sp.csc_matrix(A), drop_tol=1e-5, fill_factor=20)
        M = spla.LinearOperator(A.shape, ilu.solve)
    except RuntimeError:
        logger.warning("ILU factorization failed; falling back to Jacobi preconditioning")
        diag = A.diagonal()
        diag[diag == 0.0] = 1.0
        M = sp.diags(1.0 / diag)
    if method == "gmres":
        x, info = spla.gmres(A, b, x0=x0, M=M, rtol=tol, atol=0.0, restart=50, maxiter=max_iter)
    else:
        x, info = spla.bicgstab(A, b, x0=x0, M=M, rtol=tol, atol=0.0, maxiter=max_iter)
    if info < 0:
        logger.warning("%s reported breakdown (info=%d)", method, info)
    return x, relative_residual(A, x, b)


def solve(
    A: SparseMatrix,
    b: np.ndarray,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    *,
    method: str = "direct",
    x0: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Solve ``A x = b`` to relative residual ``tol``.

    Raises SolverDivergence with the achieved residual when the contract is missed.
    """
    if A.shape[0] != A.shape[1]:
        raise InvalidArgumentError(f"matrix must be square, got {A.shape}")
    b = np.asarray(b, dtype=float)
    if b.shape != (A.shape[0],):
        raise InvalidArgumentError(f"right-hand side has shape {b.shape}, expected ({A.shape[0]},)")
    if method not in SOLVERS:
        raise InvalidArgumentError(f"unknown solver {method!r}; expected one of {SOLVERS}")
    if A.shape[0] == 0 or not np.any(b):
        return np.zeros(A.shape[0])

    A = sp.csr_matrix(A)
    if method == "direct":
        x, residual = _direct(A, b, tol)
    else:
        x, residual = _krylov(A, b, tol, max_iter, method, x0)
    if not np.isfinite(residual) or residual > tol:
        raise SolverDivergence(f"{method} solve did not reach tol={tol:.1e}", residual=residual, iterations=max_iter)
    return x


__all__ = ["SparseMatrix", "assemble_sparse", "relative_residual", "solve", "SOLVERS", "DEFAULT_TOL"]
