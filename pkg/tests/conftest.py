"""Shared numeric oracles for the test suite.

The block objectives in this library are exactly quadratic in each block, so
finite differences with a wide step are exact for them up to roundoff.  The
oracle below minimizes a black-box quadratic purely from objective
evaluations (central-difference gradient and Hessian, one dense solve),
independent of every closed-form solve path in the package.
"""

import numpy as np


def numeric_quadratic_argmin(f, dim: int, h: float = 0.25) -> np.ndarray:
    """Minimize an exactly-quadratic black-box function of `dim` variables."""
    x0 = np.zeros(dim)
    f0 = f(x0)
    E = np.eye(dim) * h
    fplus = np.array([f(x0 + E[i]) for i in range(dim)])
    fminus = np.array([f(x0 - E[i]) for i in range(dim)])
    g = (fplus - fminus) / (2 * h)
    H = np.zeros((dim, dim))
    for i in range(dim):
        H[i, i] = (fplus[i] - 2 * f0 + fminus[i]) / h**2
        for j in range(i + 1, dim):
            fpp = f(x0 + E[i] + E[j])
            H[i, j] = H[j, i] = (fpp - fplus[i] - fplus[j] + f0) / h**2
    return np.linalg.solve(H, -g)


def fd_gradient(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient for stationarity checks."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g
