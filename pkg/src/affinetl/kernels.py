"""Kernel functions and Gram-matrix construction.

Three kernel families are supported:

* ``rbf``:     k(x, x') = exp(-||x - x'||^2 / (2 gamma^2))
* ``linear``:  k(x, x') = x^T x' / (2 gamma^2) + 1
* ``matern``:  the Matern family for nu in {1/2, 3/2, 5/2, inf}, evaluated
  through its closed forms (no Bessel functions at runtime).  nu = inf is
  aliased to the RBF formula, to which the family converges.

``gamma`` is the length-scale and shares units with the input coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["KernelSpec", "GramMatrix", "eval_kernel", "gram", "hadamard"]

_MATERN_NUS = (0.5, 1.5, 2.5, math.inf)

# Row-chunk budget (number of scalars) for pairwise distance construction;
# keeps the (chunk, m, p) difference tensor bounded.
_CHUNK_BUDGET = 4_000_000


@dataclass(frozen=True)
class KernelSpec:
    """A kernel family plus its length-scale.

    ``nu`` is required for (and only meaningful for) the Matern family.
    """

    family: str
    length_scale: float
    nu: float | None = None

    def __post_init__(self):
        fam = self.family.lower()
        object.__setattr__(self, "family", fam)
        if fam not in ("rbf", "linear", "matern"):
            raise ValueError(f"unknown kernel family: {self.family!r}")
        ls = float(self.length_scale)
        if not (ls > 0) or not math.isfinite(ls):
            raise ValueError(f"length_scale must be positive, got {self.length_scale}")
        object.__setattr__(self, "length_scale", ls)
        if fam == "matern":
            if self.nu is None:
                raise ValueError("Matern kernel requires nu")
            if float(self.nu) not in _MATERN_NUS:
                raise ValueError(f"nu must be one of {{1/2, 3/2, 5/2, inf}}, got {self.nu}")
            object.__setattr__(self, "nu", float(self.nu))
        elif self.nu is not None:
            raise ValueError(f"nu is only valid for the Matern family, not {fam!r}")

    @property
    def is_stationary(self) -> bool:
        """True for distance-based kernels (unit diagonal on a single sample set)."""
        return self.family != "linear"


@dataclass
class GramMatrix:
    """Kernel evaluations between two sample sets (or one set with itself)."""

    values: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("Gram matrix must be 2-dimensional")
        if self.symmetric and self.values.shape[0] != self.values.shape[1]:
            raise ValueError("symmetric Gram matrix must be square")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __array__(self, dtype=None, copy=None):
        if dtype is not None:
            return self.values.astype(dtype)
        return self.values


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError("sample set must be a 2-d array (rows are samples)")
    if X.shape[0] == 0:
        raise ValueError("empty sample set")
    return X


def _distances(X: np.ndarray, X2: np.ndarray) -> np.ndarray:
    """Pairwise Euclidean distances via explicit differences.

    Differences are formed directly (not via the expanded-square shortcut) so
    near-identical points keep full precision; squared sums are clamped at 0
    before the square root.
    """
    n, p = X.shape
    m = X2.shape[0]
    out = np.empty((n, m), dtype=float)
    chunk = max(1, _CHUNK_BUDGET // max(1, m * p))
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        diff = X[start:stop, None, :] - X2[None, :, :]
        sq = np.einsum("ijk,ijk->ij", diff, diff)
        np.maximum(sq, 0.0, out=sq)
        out[start:stop] = np.sqrt(sq)
    return out


def _apply_distance_kernel(spec: KernelSpec, r: np.ndarray) -> np.ndarray:
    gamma = spec.length_scale
    fam = spec.family
    nu = spec.nu
    if fam == "rbf" or (fam == "matern" and nu == math.inf):
        return np.exp(-(r * r) / (2.0 * gamma * gamma))
    # Matern closed forms; each evaluates to exactly 1 at r = 0.
    t = r / gamma
    if nu == 0.5:
        return np.exp(-t)
    if nu == 1.5:
        s3 = math.sqrt(3.0) * t
        return (1.0 + s3) * np.exp(-s3)
    if nu == 2.5:
        s5 = math.sqrt(5.0) * t
        return (1.0 + s5 + (5.0 / 3.0) * t * t) * np.exp(-s5)
    raise AssertionError(f"unreachable nu: {nu}")


def eval_kernel(spec: KernelSpec, x, x2) -> float:
    """Evaluate k(x, x2) for a single pair of vectors."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if x.shape != x2.shape or x.ndim != 1:
        raise ValueError(f"dimension mismatch: {x.shape} vs {x2.shape}")
    if spec.family == "linear":
        g = spec.length_scale
        return float(x @ x2 / (2.0 * g * g) + 1.0)
    r = np.sqrt(max(float(np.sum((x - x2) ** 2)), 0.0))
    return float(_apply_distance_kernel(spec, np.asarray(r)))


def gram(spec: KernelSpec, X, X2=None) -> GramMatrix:
    """Build the Gram matrix K[i, j] = k(X[i], X2[j]).

    With ``X2`` omitted the matrix is built from one sample set: the upper
    triangle is computed once and mirrored so the result is bit-exactly
    symmetric, and stationary kernels get an exact unit diagonal.
    """
    X = _as_matrix(X)
    symmetric = X2 is None
    X2m = X if symmetric else _as_matrix(X2)
    if X.shape[1] != X2m.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {X2m.shape[1]} columns")

    if spec.family == "linear":
        g = spec.length_scale
        K = X @ X2m.T / (2.0 * g * g) + 1.0
    else:
        K = _apply_distance_kernel(spec, _distances(X, X2m))

    if symmetric:
        K = np.triu(K)
        K = K + np.triu(K, 1).T
        if spec.is_stationary:
            np.fill_diagonal(K, 1.0)
    return GramMatrix(K, symmetric=symmetric)


def hadamard(K: GramMatrix, K2: GramMatrix) -> GramMatrix:
    """Elementwise (Hadamard) product of two Gram matrices."""
    A = np.asarray(K)
    B = np.asarray(K2)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch: {A.shape} vs {B.shape}")
    sym = bool(getattr(K, "symmetric", False)) and bool(getattr(K2, "symmetric", False))
    return GramMatrix(A * B, symmetric=sym)
