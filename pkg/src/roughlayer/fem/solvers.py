"""Sparse linear solvers: SuperLU direct solves and preconditioned Krylov."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import SolverError

DIRECT = "direct"
ITERATIVE = "iterative"
_ALIASES = {
    "direct": DIRECT, "directlu": DIRECT, "lu": DIRECT,
    "iterative": ITERATIVE, "preconditionediterative": ITERATIVE, "gmres": ITERATIVE,
}


def _method(name):
    key = str(name).replace("_", "").replace("-", "").lower()
    if key not in _ALIASES:
        raise SolverError(f"unknown solver method {name!r}")
    return _ALIASES[key]


def factorize(A):
    """SuperLU factorization; singular matrices raise SolverError."""
    A = sp.csc_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise SolverError("matrix is not square", {"shape": A.shape})
    try:
        return spla.splu(A, permc_spec="MMD_AT_PLUS_A", options={"SymmetricMode": False})
    except RuntimeError as exc:
        diag = {"shape": A.shape, "nnz": A.nnz, "reason": str(exc)}
        zero_rows = np.flatnonzero(np.diff(sp.csr_matrix(A).indptr) == 0)
        if len(zero_rows):
            diag["empty_rows"] = zero_rows[:20].tolist()
        raise SolverError("LU factorization failed (singular matrix)", diag) from exc


def _residual(A, x, b):
    return float(np.linalg.norm(A @ x - b))


def solve_sparse(A, b, method="direct", tol=1e-10, maxiter=2000, x0=None, check=True):
    """Solve ``A x = b``.

    The direct path asserts ``||Ax - b|| <= tol (||b|| + 1)``.  The iterative
    path runs GMRES with an incomplete-LU preconditioner to relative
    tolerance ``tol``.
    """
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    if A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
        raise SolverError("dimension mismatch", {"shape": A.shape, "rhs": b.shape})
    m = _method(method)
    if m == DIRECT:
        lu = factorize(A)
        x = lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise SolverError("direct solve produced non-finite values", {"shape": A.shape})
        if check:
            r = _residual(A, x, b)
            if r > tol * (np.linalg.norm(b) + 1.0):
                # one step of iterative refinement before giving up
                x = x + lu.solve(b - A @ x)
                r = _residual(A, x, b)
                if r > tol * (np.linalg.norm(b) + 1.0):
                    raise SolverError("direct solve residual too large", {"residual": r, "rhs_norm": float(np.linalg.norm(b))})
        return x

    try:
        ilu = spla.spilu(sp.csc_matrix(A), drop_tol=1e-5, fill_factor=20)
    except RuntimeError as exc:
        raise SolverError("incomplete LU failed (singular matrix)", {"reason": str(exc)}) from exc
    M = spla.LinearOperator(A.shape, ilu.solve)
    x, info = spla.gmres(A, b, x0=x0, rtol=tol, atol=0.0, restart=100, maxiter=maxiter, M=M)
    r = _residual(A, x, b)
    if info != 0 or not np.isfinite(r):
        raise SolverError("iterative solver did not converge", {"info": int(info), "residual": r,
                                                                "rhs_norm": float(np.linalg.norm(b))})
    return x


class ReusedLUSolver:
    """Solve a slowly changing sequence of systems of fixed pattern.

    The LU factors of an earlier matrix precondition GMRES on the current
    one; when GMRES needs more than ``max_iter`` iterations the current matrix
    is refactorized.  Results meet ``||Ax - b|| <= tol (||b|| + 1)``.
    """

    def __init__(self, tol=1e-10, max_iter=25):
        self.tol = tol
        self.max_iter = max_iter
        self._lu = None
        self.n_factorizations = 0
        self.last_iterations = 0

    def _refactor(self, A):
        self._lu = factorize(A)
        self.n_factorizations += 1

    def solve(self, A, b):
        A = sp.csr_matrix(A)
        b = np.asarray(b, dtype=float)
        target = self.tol * (np.linalg.norm(b) + 1.0)
        if self._lu is None or self._lu.shape != A.shape:
            self._refactor(A)
        x = self._lu.solve(b)
        r = _residual(A, x, b)
        if r <= target:
            self.last_iterations = 0
            return x
        M = spla.LinearOperator(A.shape, self._lu.solve)
        count = [0]

        def cb(_):
            count[0] += 1

        bn = np.linalg.norm(b)
        x, info = spla.gmres(A, b, x0=x, M=M, rtol=0.0, atol=0.5 * target, restart=self.max_iter,
                             maxiter=1, callback=cb, callback_type="pr_norm")
        self.last_iterations = count[0]
        r = _residual(A, x, b)
        if r <= target:
            return x
        self._refactor(A)
        x = self._lu.solve(b)
        x = x + self._lu.solve(b - A @ x)
        r = _residual(A, x, b)
        if r > target or not np.isfinite(r):
            raise SolverError("solve failed after refactorization", {"residual": r, "rhs_norm": float(bn)})
        return x


class CachedLUSolver:
    """Direct solver that keeps the factors of the last matrix it saw.

    Repeated solves with an identical matrix (same pattern and values) reuse
    the factorization; any other matrix triggers a new one.
    """

    def __init__(self, tol=1e-10):
        self.tol = tol
        self._key = None
        self._lu = None
        self.n_factorizations = 0

    @staticmethod
    def _signature(A):
        return (A.shape, A.indptr.tobytes(), A.indices.tobytes(), A.data.tobytes())

    def solve(self, A, b):
        A = sp.csr_matrix(A)
        A.sort_indices()
        key = self._signature(A)
        if key != self._key:
            self._lu = factorize(A)
            self._key = key
            self.n_factorizations += 1
        b = np.asarray(b, dtype=float)
        x = self._lu.solve(b)
        target = self.tol * (np.linalg.norm(b) + 1.0)
        r = _residual(A, x, b)
        if r > target:
            x = x + self._lu.solve(b - A @ x)
            r = _residual(A, x, b)
            if r > target or not np.isfinite(r):
                raise SolverError("direct solve residual too large", {"residual": r})
        return x
