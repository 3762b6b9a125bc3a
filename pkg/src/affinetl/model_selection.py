"""Cross-validation, hyperparameter grids, and error metrics."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Grid",
    "CVResult",
    "kfold_split",
    "rmse",
    "grid_search_cv",
    "KRR_SHRINK_GRID",
    "AFFINE_FULL_GRID",
    "AFFINE_CONSTRAINED_GRID",
    "CALIBRATION_GRID",
]


@dataclass(frozen=True)
class Grid:
    """Cartesian product of per-hyperparameter candidate lists.

    Iteration order is fixed: parameters sorted by name, values in list
    order, rightmost parameter fastest.  Ties in CV are broken by this
    order (first point wins).
    """

    params: dict[str, tuple]

    def __init__(self, **params):
        clean = {}
        for name, values in params.items():
            values = tuple(values)
            if not values:
                raise ValueError(f"grid for {name!r} is empty")
            clean[name] = values
        object.__setattr__(self, "params", clean)

    def points(self):
        names = sorted(self.params)
        for combo in itertools.product(*(self.params[n] for n in names)):
            yield dict(zip(names, combo))

    def __len__(self):
        return math.prod(len(v) for v in self.params.values())


@dataclass
class CVResult:
    best_params: dict
    table: list[tuple[dict, float, list[float]]] = field(default_factory=list)
    seed: int = 0


def kfold_split(n: int, k: int, seed: int):
    """Seeded k-fold partition: a shuffled range split into k folds whose
    sizes differ by at most one.  Returns [(train_idx, test_idx), ...].
    """
    if k < 2:
        raise ValueError(f"k must be at least 2, got {k}")
    if k > n:
        raise ValueError(f"k = {k} exceeds the number of rows n = {n}")
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.array_split(perm, k)
    out = []
    for i, test in enumerate(folds):
        train = np.concatenate([f for j, f in enumerate(folds) if j != i])
        out.append((train, test))
    return out


def rmse(yhat, y) -> float:
    """Root mean squared error."""
    yhat = np.asarray(yhat, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if yhat.shape != y.shape:
        raise ValueError(f"length mismatch: {yhat.shape} vs {y.shape}")
    if y.size == 0:
        raise ValueError("rmse of empty vectors is undefined")
    d = yhat - y
    return float(np.sqrt(np.mean(d * d)))


def grid_search_cv(fitter, grid: Grid, X, Fs, y, k: int = 5, seed: int = 0) -> CVResult:
    """Evaluate every grid point by k-fold CV and pick the best mean RMSE.

    ``fitter(params, X_train, Fs_train, y_train)`` must return a callable
    ``predict(X_test, Fs_test) -> yhat`` and be deterministic given its
    inputs.  All grid points share one fold split.  A fitter that raises on
    some grid point scores +inf there instead of aborting the search.
    """
    X = np.asarray(X, dtype=float)
    Fs = np.asarray(Fs, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    folds = kfold_split(y.shape[0], k, seed)
    table = []
    best_params = None
    best_mean = math.inf
    for params in grid.points():
        fold_rmses = []
        try:
            for train, test in folds:
                predict_fn = fitter(params, X[train], Fs[train], y[train])
                fold_rmses.append(rmse(predict_fn(X[test], Fs[test]), y[test]))
            mean = float(np.mean(fold_rmses))
        except Exception:
            fold_rmses, mean = [], math.inf
        table.append((dict(params), mean, fold_rmses))
        if mean < best_mean:
            best_mean, best_params = mean, dict(params)
    if best_params is None:
        best_params = dict(table[0][0])
    return CVResult(best_params, table, seed)


# Default search grids.  KRR shrink: 50 log-spaced points spanning [1e-4, 1e2].
KRR_SHRINK_GRID = Grid(shrink=np.logspace(-4, 2, 50))

AFFINE_FULL_GRID = Grid(
    lambda1=(1e-3, 1e-2, 1e-1, 1.0),
    lambda2=(1e-2, 1e-1, 1.0, 10.0),
    lambda3=(1e-2, 1e-1, 1.0, 10.0),
)

AFFINE_CONSTRAINED_GRID = Grid(
    lambda1=(1e-3, 1e-2, 1e-1, 1.0),
    lambda3=(1e-2, 1e-1, 1.0, 10.0),
)

CALIBRATION_GRID = Grid(
    l1=np.logspace(-2, 2, 25),
    l2=(50.0, 100.0, 150.0),
)
