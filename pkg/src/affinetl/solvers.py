"""Regularized symmetric linear solvers shared by all fitting routines.

Every system in this library is symmetric positive (semi-)definite, so all
solves go through a Cholesky factorization with an escalating-jitter retry
for rank-deficient matrices (duplicated sample rows make Gram matrices
exactly singular).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

__all__ = ["PenaltyMatrix", "SingularSystemError", "solve_spd", "ridge_solve", "penalized_ls"]

_JITTER_ESCALATIONS = 3


class SingularSystemError(np.linalg.LinAlgError):
    """Raised when a system stays singular after the jitter escalations."""


@dataclass
class PenaltyMatrix:
    """A symmetric PSD quadratic-penalty matrix.

    Symmetry is enforced on construction; positive semidefiniteness is the
    builder's contract, checkable on demand via :meth:`min_eigenvalue`
    (an O(p^3) eigensolve, too costly for every construction inside a CV
    loop).
    """

    entries: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.entries, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("penalty matrix must be square")
        if not np.array_equal(A, A.T):
            raise ValueError("penalty matrix must be symmetric")
        self.entries = A

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.entries)[0])

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    def __array__(self, dtype=None, copy=None):
        if dtype is not None:
            return self.entries.astype(dtype)
        return self.entries


def _sym(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    return A


def solve_spd(A, b, info: dict | None = None) -> np.ndarray:
    """Solve A x = b for symmetric PSD A via Cholesky.

    On factorization failure, retries with diagonal jitter 1e-10 * trace/n,
    escalating x10 at most three times; the jitter actually applied is
    recorded under ``info["jitter"]`` when a dict is passed.  One step of
    iterative refinement keeps the residual near machine precision.
    """
    A = _sym(A)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if b.shape[0] != n:
        raise ValueError(f"shape mismatch: matrix {A.shape}, rhs {b.shape}")

    base = 1e-10 * np.trace(A) / max(n, 1)
    jitter = 0.0
    for attempt in range(_JITTER_ESCALATIONS + 1):
        try:
            M = A if jitter == 0.0 else A + jitter * np.eye(n)
            factor = cho_factor(M, lower=True, check_finite=False)
        except LinAlgError:
            jitter = base * 10.0**attempt
            if jitter <= 0.0:
                break
            continue
        x = cho_solve(factor, b, check_finite=False)
        x += cho_solve(factor, b - M @ x, check_finite=False)
        if info is not None:
            info["jitter"] = jitter
        return x
    raise SingularSystemError(
        f"system is singular beyond jitter tolerance (applied jitter up to {jitter:g})"
    )


def ridge_solve(K, y, shrink: float, info: dict | None = None) -> np.ndarray:
    """Solve (K + shrink * I) c = y for symmetric K and shrink >= 0."""
    K = _sym(K)
    if shrink < 0:
        raise ValueError(f"shrink must be nonnegative, got {shrink}")
    A = K if shrink == 0 else K + shrink * np.eye(K.shape[0])
    return solve_spd(A, y, info=info)


def penalized_ls(X, y, penalty, info: dict | None = None) -> np.ndarray:
    """Minimize ||y - X w||^2 + w^T penalty w, i.e. (X^T X + penalty)^{-1} X^T y."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2:
        raise ValueError("design matrix must be 2-d")
    if y.shape[0] != X.shape[0]:
        raise ValueError(f"shape mismatch: design {X.shape}, target {y.shape}")
    P = np.asarray(penalty, dtype=float)
    if P.shape != (X.shape[1], X.shape[1]):
        raise ValueError(f"penalty must be {X.shape[1]}x{X.shape[1]}, got {P.shape}")
    return solve_spd(X.T @ X + P, X.T @ y, info=info)
