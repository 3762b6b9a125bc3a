"""Kernel ridge regression reference procedures.

Five ways of using (or ignoring) source features, all built on plain KRR
with an explicit diagonal shrink ((K + shrink I)^{-1} y):

* ``direct``       KRR on the raw inputs x, no transfer.
* ``only_source``  KRR on the source features fs.
* ``augmented``    KRR on the columnwise concatenation [x, fs].
* ``htl_offset``   stage 1 fits fs -> y, stage 2 fits x -> (y - g1hat).
* ``htl_scale``    stage 1 fits fs -> y, stage 2 fits x -> (y / g1hat).

Predictions compose per kind: htl_offset adds the stages, htl_scale
multiplies them (the transformation pair behind the scale variant divides
the outputs on the way in, so the model transform multiplies on the way
out).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import KernelSpec, gram
from .solvers import ridge_solve

__all__ = ["KINDS", "KRRStage", "BaselineModel", "fit_baseline", "predict_baseline"]

KINDS = ("direct", "only_source", "augmented", "htl_offset", "htl_scale")

_SINGLE_STAGE = ("direct", "only_source", "augmented")

# Stage-1 predictions closer to zero than this make the scale transform
# y / g1hat numerically meaningless.
_SCALE_GUARD = 1e-8


@dataclass
class KRRStage:
    """One fitted kernel ridge regressor: dual coefficients over train rows."""

    coef: np.ndarray
    spec: KernelSpec
    train: np.ndarray
    shrink: float

    def predict(self, Z) -> np.ndarray:
        return gram(self.spec, Z, self.train).values @ self.coef


@dataclass
class BaselineModel:
    kind: str
    stage1: KRRStage
    stage2: KRRStage | None = None


def _fit_krr(spec: KernelSpec, Z, y, shrink: float) -> KRRStage:
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    K = gram(spec, Z).values
    return KRRStage(ridge_solve(K, np.asarray(y, dtype=float), shrink), spec, Z, shrink)


def fit_baseline(
    kind: str,
    X,
    Fs,
    y,
    spec: KernelSpec,
    shrink: float,
    stage2_spec: KernelSpec | None = None,
    stage2_shrink: float | None = None,
) -> BaselineModel:
    """Fit one of the five procedures.

    For the single-stage kinds, ``spec``/``shrink`` parameterize the one KRR
    (on x, fs, or [x, fs] per kind).  For the two-stage kinds they
    parameterize the fs -> y stage and ``stage2_*`` the x -> transformed-y
    stage; both stage-2 settings are then required.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown baseline kind {kind!r}; expected one of {KINDS}")
    X = np.asarray(X, dtype=float)
    Fs = np.asarray(Fs, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim == 1:
        X = X[:, None]
    if Fs.ndim == 1:
        Fs = Fs[:, None]
    if X.shape[0] != y.shape[0] or Fs.shape[0] != y.shape[0]:
        raise ValueError("X, Fs, y must have the same number of rows")

    if kind == "direct":
        return BaselineModel(kind, _fit_krr(spec, X, y, shrink))
    if kind == "only_source":
        return BaselineModel(kind, _fit_krr(spec, Fs, y, shrink))
    if kind == "augmented":
        return BaselineModel(kind, _fit_krr(spec, np.hstack([X, Fs]), y, shrink))

    if stage2_spec is None or stage2_shrink is None:
        raise ValueError(f"{kind} requires stage2_spec and stage2_shrink")
    stage1 = _fit_krr(spec, Fs, y, shrink)
    g1 = stage1.predict(Fs)
    if kind == "htl_offset":
        z = y - g1
    else:  # htl_scale
        small = np.flatnonzero(np.abs(g1) < _SCALE_GUARD)
        if small.size:
            raise ZeroDivisionError(
                f"htl_scale: stage-1 prediction within {_SCALE_GUARD:g} of zero "
                f"at row {small[0]} (|g1| = {abs(g1[small[0]]):.3e})"
            )
        z = y / g1
    stage2 = _fit_krr(stage2_spec, X, z, stage2_shrink)
    return BaselineModel(kind, stage1, stage2)


def predict_baseline(model: BaselineModel, Xnew, FsNew) -> np.ndarray:
    """Predict at new rows; composition of stages depends on the kind."""
    Xnew = np.asarray(Xnew, dtype=float)
    FsNew = np.asarray(FsNew, dtype=float)
    if Xnew.ndim == 1:
        Xnew = Xnew[:, None]
    if FsNew.ndim == 1:
        FsNew = FsNew[:, None]
    if Xnew.shape[0] != FsNew.shape[0]:
        raise ValueError("Xnew and FsNew must have the same number of rows")
    kind = model.kind
    if kind == "direct":
        return model.stage1.predict(Xnew)
    if kind == "only_source":
        return model.stage1.predict(FsNew)
    if kind == "augmented":
        return model.stage1.predict(np.hstack([Xnew, FsNew]))
    g1 = model.stage1.predict(FsNew)
    g3 = model.stage2.predict(Xnew)
    return g1 + g3 if kind == "htl_offset" else g1 * g3
