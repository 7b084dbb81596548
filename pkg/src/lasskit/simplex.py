"""Euclidean projection onto the probability simplex."""

from __future__ import annotations

import numpy as np


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Project v onto {z : z >= 0, sum(z) = 1}.

    Sort-based O(K log K) algorithm; exact in exact arithmetic and
    idempotent. Invariant to shifts along the all-ones direction.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("expected a nonempty 1-d vector")
    u = np.sort(v)[::-1]
    cumsum = np.cumsum(u)
    j = np.arange(1, v.size + 1)
    rho = np.nonzero(u + (1.0 - cumsum) / j > 0)[0][-1]
    theta = (1.0 - cumsum[rho]) / (rho + 1)
    return np.maximum(v + theta, 0.0)


def project_rows(z: np.ndarray) -> np.ndarray:
    """Row-wise simplex projection of an N x K matrix."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    n, k = z.shape
    u = -np.sort(-z, axis=1)
    cumsum = np.cumsum(u, axis=1)
    j = np.arange(1, k + 1)
    feasible = u + (1.0 - cumsum) / j > 0
    rho = k - 1 - feasible[:, ::-1].argmax(axis=1)
    theta = (1.0 - cumsum[np.arange(n), rho]) / (rho + 1)
    return np.maximum(z + theta[:, None], 0.0)
