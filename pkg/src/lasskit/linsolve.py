"""Cached sparse Cholesky (with CG fallback) for the shifted systems (2*lam*L + rho*I) X = B."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .graph import GraphLaplacian


class FactorizationError(RuntimeError):
    """Raised when the Cholesky factor exceeds the fill budget.

    Callers should fall back to cg_solve.
    """

    def __init__(self, fill_ratio: float, fill_cap: float):
        self.fill_ratio = fill_ratio
        self.fill_cap = fill_cap
        super().__init__(
            f"Cholesky fill ratio {fill_ratio:.1f} exceeds cap {fill_cap:.1f}; "
            "use the conjugate-gradient backend instead"
        )


@dataclass
class CgConfig:
    max_iterations: int = 1000
    residual_tolerance: float = 1e-10
    preconditioner: str = "diagonal"  # {"none", "diagonal"}

    def __post_init__(self):
        if not self.residual_tolerance > 0:
            raise ValueError("residual_tolerance must be positive")
        if self.preconditioner not in ("none", "diagonal"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")


@dataclass
class ShiftedFactor:
    """Cholesky factor R with R R^T = P (2*lam*L + rho*I) P^T.

    The permutation is a fill-reducing (minimum-degree) ordering. The factor
    is immutable and reusable across iterations and right-hand sides.
    """

    n: int
    lam: float
    rho: float
    permutation: np.ndarray
    cholesky_factor: sp.csc_matrix
    fill_ratio: float
    matrix: sp.csc_matrix
    _lu: object = field(repr=False, default=None)

    def solve(self, b):
        return solve(self, b)


def shifted_matrix(l: GraphLaplacian, lam: float, rho: float) -> sp.csc_matrix:
    return (2.0 * lam * l.matrix + rho * sp.eye(l.n, format="csr")).tocsc()


def factorize(l: GraphLaplacian, lam: float, rho: float,
              fill_cap: float = 20.0) -> ShiftedFactor:
    """Factor 2*lam*L + rho*I with a fill-reducing symmetric ordering.

    The underlying SuperLU run uses symmetric mode with no pivoting, which
    on a positive definite matrix yields L*U with U = diag(U) * L^T; the
    Cholesky factor is R = L * sqrt(diag(U)).
    """
    if not rho > 0:
        raise ValueError("rho must be positive")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    a = shifted_matrix(l, lam, rho)
    lu = spla.splu(a, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                   options=dict(SymmetricMode=True))
    du = lu.U.diagonal()
    if du.min() <= 0:
        raise FactorizationError(np.inf, fill_cap)
    r = (lu.L @ sp.diags(np.sqrt(du))).tocsc()
    nnz_lower = (a.nnz + a.shape[0]) // 2
    fill_ratio = r.nnz / max(nnz_lower, 1)
    if fill_ratio > fill_cap:
        raise FactorizationError(fill_ratio, fill_cap)
    return ShiftedFactor(
        n=l.n, lam=lam, rho=rho, permutation=lu.perm_c.copy(),
        cholesky_factor=r, fill_ratio=float(fill_ratio), matrix=a, _lu=lu,
    )


def solve(factor: ShiftedFactor, b) -> np.ndarray:
    """Solve (2*lam*L + rho*I) X = B by two triangular backsolves per column."""
    b = np.asarray(b, dtype=float)
    squeeze = b.ndim == 1
    if squeeze:
        b = b[:, None]
    if b.shape[0] != factor.n:
        raise ValueError(f"right-hand side has {b.shape[0]} rows, factor expects {factor.n}")
    x = factor._lu.solve(np.asfortranarray(b))
    return x.ravel() if squeeze else x


def cg_solve(l: GraphLaplacian, lam: float, rho: float, b,
             warm_start=None, cfg: CgConfig | None = None):
    """Conjugate-gradient solve of (2*lam*L + rho*I) X = B, column by column.

    Returns (X, info) where info lists per-column (iterations, converged).
    Columns are independent; a warm start is used when supplied.
    """
    if not rho > 0:
        raise ValueError("rho must be positive")
    cfg = cfg or CgConfig()
    b = np.asarray(b, dtype=float)
    squeeze = b.ndim == 1
    if squeeze:
        b = b[:, None]
    if warm_start is not None:
        warm_start = np.asarray(warm_start, dtype=float).reshape(b.shape)
    a = shifted_matrix(l, lam, rho)
    precond = None
    if cfg.preconditioner == "diagonal":
        dinv = 1.0 / a.diagonal()
        precond = spla.LinearOperator(a.shape, matvec=lambda v: dinv * v)
    x = np.zeros_like(b)
    info = []
    for k in range(b.shape[1]):
        x0 = None if warm_start is None else np.asarray(warm_start)[:, k]
        iters = 0

        def count(_):
            nonlocal iters
            iters += 1

        xk, flag = spla.cg(a, b[:, k], x0=x0, rtol=cfg.residual_tolerance,
                           atol=0.0, maxiter=cfg.max_iterations, M=precond,
                           callback=count)
        x[:, k] = xk
        info.append((iters, flag == 0))
    return (x.ravel() if squeeze else x), info
