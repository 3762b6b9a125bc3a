"""Spectrum decay analysis of Gram matrices and their Hadamard products.

The decay rate of a PSD matrix K is the smallest s such that

    lambda_i <= ||K||_F^2 * i^(-1/s)    for all i,

evaluated after rescaling K by its largest diagonal entry.  The rescaling
makes the estimate invariant to K's overall scale (the raw inequality is
not: its two sides scale as c and c^2) and is a no-op exactly where the
definition is usually applied: Gram matrices of stationary kernels have unit
diagonal, for which lambda_i * i <= trace = n <= ||K||_F^2 also guarantees
the defining inequality is feasible at s = 1.  For K = I_n the estimate is
exactly 1.

``run_overlap_experiment`` probes how the decay rate of a Hadamard product
K2 o K3 responds to the overlap between the subspaces generating the two
sample sets: samples for x are drawn from a random orthonormal frame, and
samples for fs from a frame sharing d of those directions, the rest taken
from the orthogonal complement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import KernelSpec, GramMatrix, gram, hadamard

__all__ = [
    "DecayEstimate",
    "OverlapExperimentConfig",
    "OverlapRow",
    "eigvals_desc",
    "decay_rate",
    "run_overlap_experiment",
]

_NEG_EIG_TOL = 1e-8


@dataclass(frozen=True)
class DecayEstimate:
    s: float
    eigenvalues_used: int
    floor_applied: bool


@dataclass(frozen=True)
class OverlapRow:
    d: int
    repeat: int
    s2: float
    s3: float
    s_hadamard: float


@dataclass(frozen=True)
class OverlapExperimentConfig:
    """Settings for one overlap level of the Hadamard-decay experiment."""

    d: int
    ambient_dim: int = 100
    n_bases: int = 10
    n_samples: int = 100
    repeats: int = 100
    spec2: KernelSpec = KernelSpec("rbf", np.sqrt(10.0))
    spec3: KernelSpec = KernelSpec("rbf", np.sqrt(10.0))
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.d <= self.n_bases:
            raise ValueError(f"overlap d must be in [0, {self.n_bases}], got {self.d}")
        if self.n_bases > self.ambient_dim // 2:
            raise ValueError(
                "n_bases must be at most ambient_dim/2 so the complement can host "
                f"{self.n_bases - self.d} extra directions"
            )
        if self.n_samples < 2 or self.repeats < 1:
            raise ValueError("need n_samples >= 2 and repeats >= 1")


def eigvals_desc(K) -> np.ndarray:
    """Full spectrum of a symmetric PSD matrix, nonincreasing.

    Small negative eigenvalues (above -1e-8) are clamped to zero; anything
    below that is treated as a genuinely non-PSD input and rejected.
    """
    A = np.asarray(K, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    if not np.allclose(A, A.T, rtol=0.0, atol=1e-12 * scale):
        raise ValueError("matrix must be symmetric")
    vals = np.linalg.eigvalsh(A)[::-1]
    if vals.size and vals[-1] < -_NEG_EIG_TOL:
        raise ValueError(f"matrix is not PSD: smallest eigenvalue {vals[-1]:.3e}")
    return np.maximum(vals, 0.0)


def decay_rate(K, floor: float = 0.01, eig_tol: float = 1e-10) -> DecayEstimate:
    """Smallest decay exponent s in (0, 1] of the diagonal-rescaled matrix.

    Eigenvalues at or below ``eig_tol`` times the largest are noise-level
    zeros and satisfy the bound for every s, so they are excluded; so is
    i = 1, whose constraint is vacuous.  Degenerate spectra with no binding
    index (e.g. rank one) return ``floor`` with ``floor_applied`` set.
    """
    A = np.asarray(K, dtype=float)
    scale = float(np.max(np.diagonal(A))) if A.size else 0.0
    if scale <= 0.0:
        return DecayEstimate(floor, 0, True)
    A = A / scale
    lam = eigvals_desc(A)
    if lam[0] <= 0.0:
        return DecayEstimate(floor, 0, True)
    fro2 = float(np.sum(A * A))
    idx = np.arange(2, lam.size + 1)
    keep = lam[1:] > eig_tol * lam[0]
    used = int(np.count_nonzero(keep)) + 1
    if not np.any(keep):
        return DecayEstimate(floor, used, True)
    i = idx[keep].astype(float)
    log_ratio = np.log(fro2 / lam[1:][keep])
    with np.errstate(divide="ignore"):
        s_all = np.where(log_ratio > 0.0, np.log(i) / log_ratio, np.inf)
    s = float(np.max(s_all))
    if s < floor:
        return DecayEstimate(floor, used, True)
    return DecayEstimate(min(s, 1.0), used, False)


def _overlap_samples(rng: np.random.Generator, cfg: OverlapExperimentConfig):
    """One repeat's (X, Fs) sample pair at overlap level cfg.d.

    Sample i of x places i.i.d. normal coefficients on an orthonormal frame;
    sample i of fs reuses x's coefficients on the d shared directions and
    places fresh i.i.d. coefficients on directions from the orthogonal
    complement.  The reuse is what couples the two Gram matrices: without it
    the pair (K2, K3) would not depend on d at all, because orthonormal
    frames leave pairwise sample geometry a function of coefficients only.

    Draw order is fixed (frame, x-coefficients, fs-coefficients, then the
    index selection) so repeats paired across different d share frames and
    coefficients.
    """
    Q, _ = np.linalg.qr(rng.standard_normal((cfg.ambient_dim, cfg.ambient_dim)))
    coeff_x = rng.standard_normal((cfg.n_samples, cfg.n_bases))
    coeff_fs = rng.standard_normal((cfg.n_samples, cfg.n_bases))
    basis_x = Q[:, : cfg.n_bases]
    shared = rng.choice(cfg.n_bases, size=cfg.d, replace=False).astype(int)
    extra = cfg.n_bases + rng.choice(
        cfg.ambient_dim - cfg.n_bases, size=cfg.n_bases - cfg.d, replace=False
    ).astype(int)
    X = coeff_x @ basis_x.T
    Fs = coeff_x[:, shared] @ Q[:, shared].T + coeff_fs[:, : cfg.n_bases - cfg.d] @ Q[:, extra].T
    return X, Fs


def run_overlap_experiment(cfg: OverlapExperimentConfig) -> list[OverlapRow]:
    """Decay rates of K2, K3, and K2 o K3 across seeded repeats.

    Gram matrices are normalized by 1/n before the estimate.  Repeat r uses
    generator seed ``cfg.seed + r``, independent of d.
    """
    rows = []
    for r in range(cfg.repeats):
        rng = np.random.default_rng(cfg.seed + r)
        X, Fs = _overlap_samples(rng, cfg)
        n = cfg.n_samples
        K2 = GramMatrix(gram(cfg.spec2, Fs).values / n, symmetric=True)
        K3 = GramMatrix(gram(cfg.spec3, X).values / n, symmetric=True)
        rows.append(
            OverlapRow(
                cfg.d,
                r,
                decay_rate(K2).s,
                decay_rate(K3).s,
                decay_rate(hadamard(K2, K3)).s,
            )
        )
    return rows
