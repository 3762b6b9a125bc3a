"""Affine transfer estimator: g1(fs) + g2(fs) * g3(x), fit by block relaxation.

All three component functions live in RKHSs, so the fitted predictor is
parameterized by dual coefficient vectors ``a``, ``b``, ``c`` over the
training rows (plus an optional intercept ``d``):

    yhat = K1 a + w o (K3 c) + d,     w = K2 b           (variant "full")
                                      w = K2 b + 1       (other variants)

``o`` is the elementwise product.  Three variants are supported:

* ``full``:                w = K2 b, no intercept; cyclic updates of a, b, c.
* ``full_with_intercept``: w = K2 b + 1 with intercept d; updates a, b, c, d.
* ``constrained``:         g2 fixed at 1 (b = 0, w = 1); a, c, d solved
  jointly in closed form, no iteration.

Each block update is the exact minimizer of the objective with the other
blocks held fixed, so the per-iteration objective sequence is nonincreasing.

``scale_convention`` selects how regularization weights enter the solves:
``eqn3`` minimizes (1/n)||r||^2 + sum_i lambda_i theta^T K_i theta (the
lambdas meet the diagonal as n*lambda), while ``appendix`` minimizes
||r||^2 + sum_i lambda_i theta^T K_i theta (plain lambda on the diagonal).
``objective`` reports the form matching the convention, so fitted traces are
monotone under either one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import KernelSpec, gram
from .solvers import ridge_solve, solve_spd

__all__ = [
    "FitConfig",
    "AffineTLModel",
    "FitTrace",
    "objective",
    "update_block",
    "fit",
    "fit_constrained",
    "predict",
]

_VARIANTS = ("full", "full_with_intercept", "constrained")
_CONVENTIONS = ("eqn3", "appendix")

# Stopping-criterion guard: blocks whose old iterate is essentially zero are
# compared by absolute update size instead of the undefined ratio.
_RATIO_GUARD = 1e-12


@dataclass(frozen=True)
class FitConfig:
    """Hyperparameters and controls for :func:`fit`."""

    lambda1: float
    lambda2: float
    lambda3: float
    variant: str = "full"
    tol: float = 1e-4
    max_iter: int = 1000
    seed: int = 0
    scale_convention: str = "eqn3"

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.variant not in _VARIANTS:
            raise ValueError(f"variant must be one of {_VARIANTS}, got {self.variant!r}")
        if self.scale_convention not in _CONVENTIONS:
            raise ValueError(
                f"scale_convention must be one of {_CONVENTIONS}, got {self.scale_convention!r}"
            )
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")

    def shrink(self, lam: float, n: int) -> float:
        """The diagonal weight a lambda contributes inside a block solve."""
        return lam * n if self.scale_convention == "eqn3" else lam


@dataclass
class AffineTLModel:
    """A fitted affine transfer predictor (immutable after fitting)."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: float
    train_X: np.ndarray
    train_Fs: np.ndarray
    specs: tuple[KernelSpec, KernelSpec, KernelSpec]
    variant: str


@dataclass
class FitTrace:
    """Per-iteration objective values and convergence metadata."""

    objectives: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    final_update_ratio: float = float("nan")


def _unit_offset(variant: str) -> bool:
    return variant in ("full_with_intercept", "constrained")


def _check_vectors(K1, K2, K3, y, a, b, c):
    n = y.shape[0]
    for name, arr in (("a", a), ("b", b), ("c", c), ("y", y)):
        if arr.ndim != 1 or arr.shape[0] != n:
            raise ValueError(f"{name} must be a length-{n} vector, got shape {arr.shape}")
    for name, K in (("K1", K1), ("K2", K2), ("K3", K3)):
        if K.shape != (n, n):
            raise ValueError(f"{name} must be {n}x{n}, got {K.shape}")


def _fitted_values(a, b, c, d, K1, K2, K3, variant: str) -> np.ndarray:
    w = K2 @ b
    if _unit_offset(variant):
        w = w + 1.0
    return K1 @ a + w * (K3 @ c) + d


def objective(a, b, c, d: float, K1, K2, K3, y, config: FitConfig) -> float:
    """Regularized empirical risk at the given dual coefficients.

    Returns loss_scale * ||y - yhat||^2 + lambda1 a'K1a + lambda2 b'K2b
    + lambda3 c'K3c with loss_scale = 1/n under ``eqn3`` and 1 under
    ``appendix``; yhat follows the config's variant.
    """
    a, b, c = (np.asarray(v, dtype=float) for v in (a, b, c))
    K1, K2, K3 = (np.asarray(K, dtype=float) for K in (K1, K2, K3))
    y = np.asarray(y, dtype=float)
    _check_vectors(K1, K2, K3, y, a, b, c)
    if config.variant == "full" and d != 0.0:
        raise ValueError("variant 'full' has no intercept; d must be 0")
    r = y - _fitted_values(a, b, c, d, K1, K2, K3, config.variant)
    loss = float(r @ r)
    if config.scale_convention == "eqn3":
        loss /= y.shape[0]
    return (
        loss
        + config.lambda1 * float(a @ (K1 @ a))
        + config.lambda2 * float(b @ (K2 @ b))
        + config.lambda3 * float(c @ (K3 @ c))
    )


def _scaled_ridge(K, weights, target, shrink):
    """Exact minimizer x of the block problem whose normal equations read
    (diag(weights)^2 K + shrink I) x = diag(weights) target.

    Solved as weights o (diag(w) K diag(w) + shrink I)^{-1} target, which is
    the same vector but keeps the factored matrix symmetric PSD.
    """
    Kw = K * np.outer(weights, weights)
    return weights * ridge_solve(Kw, target, shrink)


def update_block(which: str, state, K1, K2, K3, y, config: FitConfig):
    """Exact minimizer of the objective over one block, others fixed.

    ``state`` is the current (a, b, c, d); returns the new value of the
    requested block (a vector for a/b/c, a float for d).
    """
    a, b, c, d = state
    a, b, c = (np.asarray(v, dtype=float) for v in (a, b, c))
    K1, K2, K3 = (np.asarray(K, dtype=float) for K in (K1, K2, K3))
    y = np.asarray(y, dtype=float)
    _check_vectors(K1, K2, K3, y, a, b, c)
    n = y.shape[0]
    variant = config.variant
    if variant == "constrained":
        raise ValueError("variant 'constrained' is solved jointly; no block updates")
    offset = 1.0 if _unit_offset(variant) else 0.0
    if which == "a":
        w = K2 @ b + offset
        return ridge_solve(K1, y - w * (K3 @ c) - d, config.shrink(config.lambda1, n))
    if which == "b":
        u = K3 @ c
        target = y - K1 @ a - offset * u - d
        return _scaled_ridge(K2, u, target, config.shrink(config.lambda2, n))
    if which == "c":
        w = K2 @ b + offset
        target = y - K1 @ a - d
        return _scaled_ridge(K3, w, target, config.shrink(config.lambda3, n))
    if which == "d":
        if variant == "full":
            raise ValueError("variant 'full' has no intercept block")
        w = K2 @ b + offset
        return float(np.mean(y - K1 @ a - w * (K3 @ c)))
    raise ValueError(f"unknown block {which!r}")


def fit_constrained(K1, K3, y, lambda1: float, lambda3: float):
    """Joint closed-form solution for the g2 = 1 variant.

    Solves the stacked (2n+1) x (2n+1) system

        ([K1; K3; 1'] [K1 K3 1] + blockdiag(lambda1 K1, lambda3 K3, 0)) (a,c,d)
            = [K1; K3; 1'] y

    and returns (a, c, d).
    """
    K1 = np.asarray(K1, dtype=float)
    K3 = np.asarray(K3, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if K1.shape != (n, n) or K3.shape != (n, n):
        raise ValueError("K1, K3 must be n x n matching y")
    B = np.hstack([K1, K3, np.ones((n, 1))])
    G = B.T @ B
    G[:n, :n] += lambda1 * K1
    G[n : 2 * n, n : 2 * n] += lambda3 * K3
    theta = solve_spd(G, B.T @ y)
    return theta[:n], theta[n : 2 * n], float(theta[2 * n])


def _update_ratio(new: np.ndarray, old: np.ndarray) -> float:
    num = float(np.max(np.abs(new - old)))
    den = float(np.max(np.abs(old)))
    return num if den < _RATIO_GUARD else num / den


def fit(config: FitConfig, X, Fs, y, specs) -> tuple[AffineTLModel, FitTrace]:
    """Fit the affine transfer model on training data.

    ``specs`` is the (k1, k2, k3) kernel triple; k1 and k2 act on the source
    features, k3 on the raw inputs.  Cyclic exact block updates run until the
    largest relative coefficient change across a, b, c drops below
    ``config.tol`` or ``config.max_iter`` is reached.  The constrained
    variant is solved in one shot.
    """
    X = np.asarray(X, dtype=float)
    Fs = np.asarray(Fs, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim == 1:
        X = X[:, None]
    if Fs.ndim == 1:
        Fs = Fs[:, None]
    n = y.shape[0]
    if n < 2:
        raise ValueError("need at least two training rows")
    if X.shape[0] != n or Fs.shape[0] != n:
        raise ValueError("X, Fs, y must have the same number of rows")
    spec1, spec2, spec3 = specs

    K1 = gram(spec1, Fs).values
    K2 = gram(spec2, Fs).values
    K3 = gram(spec3, X).values

    if config.variant == "constrained":
        a, c, d = fit_constrained(
            K1, K3, y, config.shrink(config.lambda1, n), config.shrink(config.lambda3, n)
        )
        b = np.zeros(n)
        model = AffineTLModel(a, b, c, d, X, Fs, (spec1, spec2, spec3), config.variant)
        obj = objective(a, b, c, d, K1, K2, K3, y, config)
        return model, FitTrace([obj], iterations=0, converged=True, final_update_ratio=0.0)

    rng = np.random.default_rng(config.seed)
    a = ridge_solve(K1, y, config.shrink(config.lambda1, n))
    b = rng.standard_normal(n)
    c = rng.standard_normal(n)
    d = 0.5 if config.variant == "full_with_intercept" else 0.0

    trace = FitTrace([objective(a, b, c, d, K1, K2, K3, y, config)])
    ratio = float("inf")
    for _ in range(config.max_iter):
        a_new = update_block("a", (a, b, c, d), K1, K2, K3, y, config)
        b_new = update_block("b", (a_new, b, c, d), K1, K2, K3, y, config)
        c_new = update_block("c", (a_new, b_new, c, d), K1, K2, K3, y, config)
        if config.variant == "full_with_intercept":
            d = update_block("d", (a_new, b_new, c_new, d), K1, K2, K3, y, config)
        ratio = max(
            _update_ratio(a_new, a), _update_ratio(b_new, b), _update_ratio(c_new, c)
        )
        a, b, c = a_new, b_new, c_new
        trace.objectives.append(objective(a, b, c, d, K1, K2, K3, y, config))
        trace.iterations += 1
        if ratio < config.tol:
            trace.converged = True
            break
    trace.final_update_ratio = ratio
    model = AffineTLModel(a, b, c, d, X, Fs, (spec1, spec2, spec3), config.variant)
    return model, trace


def predict(model: AffineTLModel, Xnew, FsNew) -> np.ndarray:
    """Predict at new rows using cross-Gram matrices against the training set."""
    Xnew = np.asarray(Xnew, dtype=float)
    FsNew = np.asarray(FsNew, dtype=float)
    if Xnew.ndim == 1:
        Xnew = Xnew[:, None]
    if FsNew.ndim == 1:
        FsNew = FsNew[:, None]
    if Xnew.shape[0] != FsNew.shape[0]:
        raise ValueError("Xnew and FsNew must have the same number of rows")
    spec1, spec2, spec3 = model.specs
    K1s = gram(spec1, FsNew, model.train_Fs).values
    K2s = gram(spec2, FsNew, model.train_Fs).values
    K3s = gram(spec3, Xnew, model.train_X).values
    w = K2s @ model.b
    if _unit_offset(model.variant):
        w = w + 1.0
    return K1s @ model.a + w * (K3s @ model.c) + model.d
