"""Sparse solvers: Jacobi-preconditioned CG and a direct KKT solve.

Matrices are ``scipy.sparse`` CSR matrices with sorted, unique indices.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolverError(RuntimeError):
    pass


class SingularConstraintError(SolverError):
    pass


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual: float
    method: str


def as_csr(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    A.sort_indices()
    return A


def is_symmetric(A, rtol: float = 0.0) -> bool:
    A = sp.csr_matrix(A)
    if A.shape[0] != A.shape[1]:
        return False
    diff = abs(A - A.T)
    if diff.nnz == 0:
        return True
    return diff.max() <= rtol * abs(A).max()


def spd_solve(K, b, tol: float = 1e-10, maxiter: int | None = None):
    """Solve ``K x = b`` for symmetric positive definite ``K``.

    Conjugate gradients with a diagonal preconditioner, started from zero.
    Stops once ``||K x - b|| <= tol * ||b||`` (recomputed residual), and
    raises :class:`SolverError` after ``maxiter`` (default ``20 n``) steps.
    """
    K = sp.csr_matrix(K)
    b = np.asarray(b, dtype=float)
    n = K.shape[0]
    if K.shape != (n, n) or b.shape != (n,):
        raise ValueError(f"dimension mismatch: K {K.shape}, b {b.shape}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if maxiter is None:
        maxiter = 20 * n

    x = np.zeros(n)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return x, SolveReport(0, 0.0, "pcg")

    diag = K.diagonal()
    if np.any(diag <= 0):
        raise SolverError("matrix diagonal is not positive; not SPD")
    inv_diag = 1.0 / diag

    r = b.copy()
    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    restarts, max_restarts = 0, 10
    for it in range(1, maxiter + 1):
        Kp = K @ p
        pKp = p @ Kp
        if pKp <= 0:
            raise SolverError(f"non-positive curvature at iteration {it}; not SPD")
        step = rz / pKp
        x += step * p
        r -= step * Kp
        if np.linalg.norm(r) <= tol * bnorm:
            # guard against drift of the recursive residual
            res = np.linalg.norm(b - K @ x) / bnorm
            if res <= tol:
                return x, SolveReport(it, res, "pcg")
            restarts += 1
            if restarts > max_restarts:
                break
            r = b - K @ x
            z = inv_diag * r
            p = z.copy()
            rz = r @ z
            continue
        z = inv_diag * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new

    res = np.linalg.norm(b - K @ x) / bnorm
    raise SolverError(
        f"CG did not converge in {it} iterations (relative residual {res:.3e})"
    )


def prune_zero_rows(C) -> tuple[sp.csr_matrix, np.ndarray]:
    C = as_csr(C)
    C.eliminate_zeros()
    keep = np.flatnonzero(np.diff(C.indptr) > 0)
    return C[keep], keep


class KKTFactorization:
    """LU factorization of ``[K C^T; C 0]`` reusable across right-hand sides.

    Zero rows of ``C`` are dropped before factorization and get a zero
    multiplier.
    """

    def __init__(self, K, C=None):
        K = as_csr(K)
        n = K.shape[0]
        if K.shape != (n, n):
            raise ValueError(f"K must be square, got {K.shape}")
        if C is None:
            C = sp.csr_matrix((0, n))
        C = as_csr(C)
        if C.shape[1] != n:
            raise ValueError(f"dimension mismatch: C {C.shape}, K {K.shape}")
        Cp, keep = prune_zero_rows(C)
        if Cp.shape[0] > n:
            raise SingularConstraintError(
                f"{Cp.shape[0]} nonzero constraint rows exceed {n} unknowns"
            )
        self.n, self.n_constraints, self.keep = n, C.shape[0], keep
        self.matrix = sp.bmat([[K, Cp.T], [Cp, None]], format="csc")
        try:
            self.lu = spla.splu(self.matrix)
        except RuntimeError as exc:
            raise SingularConstraintError(f"singular KKT matrix: {exc}") from None

    def solve(self, r, tol: float = 1e-8):
        """Return ``(phi, mu, report)``; ``r`` may hold several columns."""
        r = np.asarray(r, dtype=float)
        if r.shape[0] != self.n:
            raise ValueError(f"dimension mismatch: r {r.shape}, K has {self.n} rows")
        shape = (self.n_constraints,) + r.shape[1:]
        rhs = np.concatenate([r, np.zeros((self.keep.size,) + r.shape[1:])])
        sol = self.lu.solve(rhs)
        if not np.all(np.isfinite(sol)):
            raise SingularConstraintError("KKT solve produced non-finite values")
        mu = np.zeros(shape)
        mu[self.keep] = sol[self.n:]
        rnorm = np.linalg.norm(rhs, axis=0)
        res = np.linalg.norm(self.matrix @ sol - rhs, axis=0)
        res = np.max(np.where(rnorm > 0, res / np.where(rnorm > 0, rnorm, 1.0), res))
        if res > tol:
            raise SingularConstraintError(
                f"KKT residual {res:.3e} exceeds {tol:.1e}; constraints likely rank deficient"
            )
        return sol[:self.n], mu, SolveReport(0, float(res), "kkt-lu")


def saddle_solve(K, C, r, tol: float = 1e-8):
    """Solve ``[K C^T; C 0] [phi; mu] = [r; 0]`` by sparse LU.

    Returns ``(phi, mu, report)`` where the report residual is the relative
    residual of the full KKT system.
    """
    r = np.asarray(r, dtype=float)
    n = sp.csr_matrix(K).shape[0]
    if r.shape != (n,):
        raise ValueError(f"dimension mismatch: K has {n} rows, r {r.shape}")
    if not np.any(r):
        m = 0 if C is None else C.shape[0]
        return np.zeros(n), np.zeros(m), SolveReport(0, 0.0, "kkt-lu")
    return KKTFactorization(K, C).solve(r, tol=tol)
