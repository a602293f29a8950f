import sys
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

sys.path.append(str(Path(__file__).resolve().parents[1]))

from cutheat.utils.errors import InvalidArgumentError, SolverDivergence
from cutheat.utils.linalg import SOLVERS, assemble_sparse, relative_residual, solve


def _diagonally_dominant(n, seed=0):
    rng = np.random.default_rng(seed)
    A = sp.random(n, n, density=0.03, random_state=seed, format="csr")
    A = A + sp.diags(np.abs(A).sum(axis=1).A1 + 1.0 + rng.uniform(size=n))
    return A.tocsr()


def test_assemble_sums_duplicates():
    A = assemble_sparse(np.array([0, 0, 1]), np.array([1, 1, 0]), np.array([2.0, 3.0, -1.0]), (2, 2))
    assert np.allclose(A.toarray(), [[0.0, 5.0], [-1.0, 0.0]])
    assert A.nnz == 2


def test_identity_and_small_system():
    b = np.array([1.0, -2.0, 3.0])
    assert np.allclose(solve(sp.identity(3, format="csr"), b), b)
    A = sp.csr_matrix(np.array([[2.0, 1.0], [1.0, 3.0]]))
    assert np.allclose(solve(A, np.array([3.0, 5.0])), [0.8, 1.4])


@pytest.mark.parametrize("method", SOLVERS)
def test_methods_reach_tolerance(method):
    A = _diagonally_dominant(200)
    x_true = np.random.default_rng(1).normal(size=200)
    b = A @ x_true
    x = solve(A, b, 1e-10, 500, method=method)
    assert relative_residual(A, x, b) <= 1e-10
    assert np.allclose(x, x_true, rtol=1e-7, atol=1e-7)


def test_nonsymmetric_system():
    A = _diagonally_dominant(120, seed=3) + sp.random(120, 120, density=0.01, random_state=4)
    A = (A + sp.diags(np.abs(A).sum(axis=1).A1)).tocsr()
    assert abs(A - A.T).max() > 0
    b = np.ones(120)
    x = solve(A, b, method="gmres", x0=np.zeros(120))
    assert relative_residual(A, x, b) <= 1e-10


def test_zero_rhs_gives_zero():
    A = _diagonally_dominant(10)
    assert not np.any(solve(A, np.zeros(10)))


def test_unreachable_tolerance_raises():
    A = _diagonally_dominant(50)
    with pytest.raises(SolverDivergence) as info:
        solve(A, np.ones(50), tol=1e-30)
    assert info.value.residual > 0


def test_singular_matrix_raises_divergence():
    A = sp.csr_matrix(np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(SolverDivergence) as info:
        solve(A, np.ones(2))
    assert info.value.residual == np.inf
    assert "factorization" in str(info.value)


def test_invalid_arguments():
    A = _diagonally_dominant(5)
    with pytest.raises(InvalidArgumentError):
        solve(A, np.ones(4))
    with pytest.raises(InvalidArgumentError):
        solve(A, np.ones(5), method="cg")
    with pytest.raises(InvalidArgumentError):
        solve(sp.csr_matrix(np.ones((2, 3))), np.ones(2))
