"""The Laplacian assignment QP and its ADMM solver.

Minimizes lam * tr(Z^T L Z) - tr(G^T Z) over row-stochastic nonnegative Z
by operator splitting: a shifted-Laplacian linear solve for the primal
update, a nonnegativity threshold, and a dual ascent step. Multiplier
recovery and KKT residual checks certify the result.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import linsolve
from .graph import GraphLaplacian, extreme_eigenvalues, _split_structure
from .simplex import project_rows


@dataclass
class Problem:
    """LASS problem data: Laplacian, item-category affinities, tradeoff lam.

    ridge_epsilon > 0 adds eps*||Z||_F^2 to the objective (gradient 2*eps*Z),
    making it strongly convex. strict_laplacian marks `laplacian` as a true
    graph Laplacian (L @ 1 = 0); principal submatrix blocks, as used by the
    labeled-data reduction, set it False.
    """

    laplacian: GraphLaplacian
    g: np.ndarray
    lam: float
    ridge_epsilon: float = 0.0
    strict_laplacian: bool = True
    check_affinity_range: bool = True

    def __post_init__(self):
        self.g = np.atleast_2d(np.asarray(self.g, dtype=float))
        if self.g.shape[0] != self.laplacian.n:
            raise ValueError(
                f"affinity matrix has {self.g.shape[0]} rows, Laplacian has {self.laplacian.n}")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.ridge_epsilon < 0:
            raise ValueError("ridge_epsilon must be nonnegative")
        if self.check_affinity_range and self.g.size:
            lo, hi = self.g.min(), self.g.max()
            if lo < -1.0 - 1e-12 or hi > 1.0 + 1e-12:
                raise ValueError(f"affinities must lie in [-1, 1], got range [{lo}, {hi}]")

    @property
    def n(self) -> int:
        return self.laplacian.n

    @property
    def k(self) -> int:
        return self.g.shape[1]


@dataclass
class SolverConfig:
    rho: float | str = "auto"
    tol: float = 1e-5
    check_interval: int = 50
    max_iterations: int = 100_000
    backend: str = "cholesky"  # {"cholesky", "cg"}
    fill_cap: float = 20.0
    cg: linsolve.CgConfig = field(default_factory=linsolve.CgConfig)
    eig_tol: float = 1e-10
    eig_max_iter: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.check_interval < 1:
            raise ValueError("check_interval must be >= 1")
        if self.backend not in ("cholesky", "cg"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.rho != "auto" and not float(self.rho) > 0:
            raise ValueError("rho must be positive or 'auto'")


@dataclass
class SolverState:
    """ADMM variables. A solve run owns its state exclusively."""

    z: np.ndarray
    y: np.ndarray
    u: np.ndarray
    nu: np.ndarray
    rho: float
    iteration: int = 0
    last_checked_z: np.ndarray | None = None
    last_delta: float = np.inf
    _kernel: object = field(default=None, repr=False)


@dataclass
class KktReport:
    stationarity: float
    primal_equality: float
    z_negativity: float
    m_negativity: float
    complementarity: float

    def as_dict(self) -> dict:
        return {
            "stationarity": self.stationarity,
            "primal_equality": self.primal_equality,
            "z_negativity": self.z_negativity,
            "m_negativity": self.m_negativity,
            "complementarity": self.complementarity,
        }


@dataclass
class Solution:
    z: np.ndarray
    pi: np.ndarray
    m: np.ndarray
    kkt: KktReport
    objective: float
    objective_raw: float
    iterations: int
    converged: bool
    uniqueness: str
    tie_rows: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)


@dataclass
class LimitAssignment:
    """The lam -> infinity limiting assignment vector (shared by all items)."""

    z: np.ndarray
    tie: bool
    tie_set: np.ndarray


def objective(p: Problem, z: np.ndarray) -> float:
    """lam * tr(Z^T L Z) - tr(G^T Z), plus eps*||Z||_F^2 when ridged."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if z.shape != p.g.shape:
        raise ValueError(f"Z has shape {z.shape}, expected {p.g.shape}")
    lz = p.laplacian.matrix @ z
    val = p.lam * float((z * lz).sum()) - float((p.g * z).sum())
    if p.ridge_epsilon > 0:
        val += p.ridge_epsilon * float((z * z).sum())
    return val


def objective_gradient(p: Problem, z: np.ndarray) -> np.ndarray:
    z = np.atleast_2d(np.asarray(z, dtype=float))
    grad = 2.0 * p.lam * (p.laplacian.matrix @ z) - p.g
    if p.ridge_epsilon > 0:
        grad = grad + 2.0 * p.ridge_epsilon * z
    return grad


def rho_star(p: Problem, cfg: SolverConfig | None = None) -> tuple[float, dict]:
    """Penalty heuristic rho* = 2*lam*sqrt(sigma_min * sigma_max).

    Requires a connected graph (callers split by component first) and
    lam > 0. On eigenvalue-estimation failure the fallback rho = 1 is
    returned with the failure recorded in the info dict.
    """
    cfg = cfg or SolverConfig()
    if not p.lam > 0 or not p.strict_laplacian:
        return 1.0, {"policy": "fallback", "reason": "rho* needs lam > 0 and a true Laplacian"}
    est = extreme_eigenvalues(p.laplacian, tol=cfg.eig_tol,
                              max_iter=cfg.eig_max_iter, seed=cfg.seed)
    info = {
        "sigma_min": est.sigma_min_nonzero,
        "sigma_max": est.sigma_max,
        "eig_converged": est.converged,
    }
    if not est.converged or est.sigma_min_nonzero <= 0 or est.sigma_max <= 0:
        info["policy"] = "fallback"
        return 1.0, info
    info["policy"] = "rho_star"
    return 2.0 * p.lam * float(np.sqrt(est.sigma_min_nonzero * est.sigma_max)), info


class _AdmmKernel:
    """One ADMM iteration against a fixed shifted operator.

    The shift vector s = (2*lam*L + (rho + 2*eps)*I) @ 1 enters the
    nu-update; for a true Laplacian it is the constant (rho + 2*eps).
    """

    def __init__(self, p: Problem, cfg: SolverConfig, rho: float):
        self.p = p
        self.cfg = cfg
        self.rho = rho
        shift = rho + 2.0 * p.ridge_epsilon
        if p.strict_laplacian:
            s = np.full(p.n, shift)
        else:
            s = 2.0 * p.lam * np.asarray(p.laplacian.matrix.sum(axis=1)).ravel() + shift
        self.h = (s - p.g.sum(axis=1)) / p.k
        self.factor = None
        if cfg.backend == "cholesky":
            self.factor = linsolve.factorize(p.laplacian, p.lam, shift, fill_cap=cfg.fill_cap)
        self._shift = shift

    def iterate(self, state: SolverState) -> None:
        p, rho = self.p, self.rho
        ymu = state.y - state.u
        state.nu = (rho / p.k) * ymu.sum(axis=1) - self.h
        b = rho * ymu + p.g - state.nu[:, None]
        if self.factor is not None:
            z = linsolve.solve(self.factor, b)
        else:
            cg_cfg = self.cfg.cg
            # inexact updates early, tightened later
            tol = max(cg_cfg.residual_tolerance, 1e-6) if state.iteration < 100 \
                else min(cg_cfg.residual_tolerance, 1e-9)
            cfg = linsolve.CgConfig(max_iterations=cg_cfg.max_iterations,
                                    residual_tolerance=tol,
                                    preconditioner=cg_cfg.preconditioner)
            z, _ = linsolve.cg_solve(p.laplacian, p.lam, self._shift, b,
                                     warm_start=state.z, cfg=cfg)
        state.z = z
        state.y = np.maximum(z + state.u, 0.0)
        state.u = state.u + z - state.y
        state.iteration += 1


def init_state(p: Problem, cfg: SolverConfig | None = None,
               warm: tuple[np.ndarray, np.ndarray] | None = None) -> SolverState:
    """Cold start Y = U = 0 (or adopt a warm (y, u) pair) and resolve rho."""
    cfg = cfg or SolverConfig()
    n, k = p.n, p.k
    if warm is not None:
        y, u = (np.array(a, dtype=float, copy=True) for a in warm)
        if y.shape != (n, k) or u.shape != (n, k):
            raise ValueError(f"warm start shapes {y.shape}, {u.shape} do not match ({n}, {k})")
    else:
        y = np.zeros((n, k))
        u = np.zeros((n, k))
    if cfg.rho == "auto":
        rho, _ = rho_star(p, cfg)
    else:
        rho = float(cfg.rho)
    return SolverState(z=np.zeros((n, k)), y=y, u=u, nu=np.zeros(n), rho=rho,
                       last_checked_z=np.zeros((n, k)))


def admm_iterate(p: Problem, cfg: SolverConfig, state: SolverState) -> SolverState:
    """Apply the four updates (nu, Z, Y, U) once, in order, mutating state."""
    if state._kernel is None:
        state._kernel = _AdmmKernel(p, cfg, state.rho)
    state._kernel.iterate(state)
    return state


def recover_multipliers(p: Problem, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Lagrange multipliers (pi, M) for a feasible Z.

    Per-row least-squares solve of the stationarity + complementarity system
    through the matrix-inversion-lemma formula with Psi = diag(z)^2 + I.
    """
    z = np.atleast_2d(np.asarray(z, dtype=float))
    k = z.shape[1]
    if np.abs(z.sum(axis=1) - 1.0).max() > 1e-8 or z.min() < -1e-10:
        raise ValueError("rows of z must lie on the probability simplex")
    grad0 = objective_gradient(p, z)
    # Q differs from the row-centered gradient by a multiple of the ones
    # vector, which the mu formula is invariant to
    q = grad0 + (p.g.sum(axis=1) / k)[:, None]
    psi_inv = 1.0 / (1.0 + z * z)
    s = psi_inv.sum(axis=1)           # 1' Psi^-1 1 < K by feasibility
    t = (psi_inv * q).sum(axis=1)     # 1' Psi^-1 q
    total = q.sum(axis=1)             # 1' q
    coef = (total - t) / (k - s)
    m = psi_inv * q - coef[:, None] * psi_inv
    pi = (grad0.sum(axis=1) - m.sum(axis=1)) / k
    return pi, m


def kkt_residuals(p: Problem, z: np.ndarray, pi: np.ndarray,
                  m: np.ndarray) -> KktReport:
    """Max-norm residuals of the optimality system at (z, pi, m)."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    pi = np.asarray(pi, dtype=float)
    m = np.atleast_2d(np.asarray(m, dtype=float))
    grad0 = objective_gradient(p, z)
    stat = np.abs(grad0 - pi[:, None] - m).max()
    primal = np.abs(z.sum(axis=1) - 1.0).max()
    zneg = max(0.0, -float(z.min()))
    mneg = max(0.0, -float(m.min()))
    comp = np.abs(m * z).max()
    return KktReport(float(stat), float(primal), zneg, mneg, float(comp))


def uniqueness_certificate(z: np.ndarray, tol: float = 1e-6) -> str:
    """'unique' iff every category column has some entry <= tol (K=1 is forced)."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if z.shape[1] == 1:
        return "unique"
    return "unique" if (z.min(axis=0) <= tol).all() else "possibly_nonunique"


def closed_form_lambda0(g: np.ndarray) -> Solution:
    """Exact solution for lam = 0: each item goes to its highest-affinity category.

    Ties break to the lowest category index and are flagged; the multipliers
    are mu = g_max*1 - g and pi = -g_max per row.
    """
    g = np.atleast_2d(np.asarray(g, dtype=float))
    n, k = g.shape
    kmax = g.argmax(axis=1)
    gmax = g[np.arange(n), kmax]
    z = np.zeros((n, k))
    z[np.arange(n), kmax] = 1.0
    ties = np.flatnonzero((g == gmax[:, None]).sum(axis=1) > 1)
    m = gmax[:, None] - g
    pi = -gmax
    lap = GraphLaplacian(matrix=sp.csr_matrix((n, n)), degrees=np.zeros(n), normalized=False)
    p0 = Problem(laplacian=lap, g=g, lam=0.0, check_affinity_range=False)
    report = kkt_residuals(p0, z, pi, m)
    return Solution(
        z=z, pi=pi, m=m, kkt=report,
        objective=-float(gmax.sum()), objective_raw=-float(gmax.sum()),
        iterations=0, converged=True,
        uniqueness="possibly_nonunique" if ties.size else uniqueness_certificate(z),
        tie_rows=ties,
        diagnostics={"path": "closed_form_lambda0"},
    )


def lp_lambda_inf(g: np.ndarray) -> LimitAssignment:
    """lam -> infinity limit: all mass on the category with maximum total affinity."""
    g = np.atleast_2d(np.asarray(g, dtype=float))
    totals = g.sum(axis=0)
    kmax = int(totals.argmax())
    tie_set = np.flatnonzero(totals == totals[kmax])
    z = np.zeros(g.shape[1])
    z[kmax] = 1.0
    return LimitAssignment(z=z, tie=tie_set.size > 1, tie_set=tie_set)


def _solve_connected(p: Problem, cfg: SolverConfig,
                     warm: tuple | None = None) -> Solution:
    state = init_state(p, cfg, warm)
    rho_info = {"rho": state.rho, "rho_policy": cfg.rho}
    kernel = _AdmmKernel(p, cfg, state.rho)
    state._kernel = kernel
    converged = False
    while state.iteration < cfg.max_iterations:
        kernel.iterate(state)
        if state.iteration % cfg.check_interval == 0:
            delta = float(np.abs(state.z - state.last_checked_z).max())
            state.last_delta = delta
            state.last_checked_z = state.z.copy()
            if delta < cfg.tol:
                converged = True
                break
    z_raw = state.z
    obj_raw = objective(p, z_raw)
    z_feas = project_rows(z_raw)
    pi = -state.nu
    m = -state.rho * state.u
    report = kkt_residuals(p, z_feas, pi, m)
    return Solution(
        z=z_feas, pi=pi, m=m, kkt=report,
        objective=objective(p, z_feas), objective_raw=obj_raw,
        iterations=state.iteration, converged=converged,
        uniqueness=uniqueness_certificate(z_feas),
        diagnostics={
            **rho_info,
            "backend": cfg.backend,
            "last_delta": state.last_delta,
            "kkt_raw": kkt_residuals(p, z_raw, pi, m).as_dict(),
        },
    )


def solve(p: Problem, cfg: SolverConfig | None = None,
          warm: tuple | None = None) -> Solution:
    """Solve the LASS problem.

    lam = 0 (without ridge) dispatches to the closed form. Disconnected
    graphs are split per component, solved independently (each with its own
    auto rho), and reassembled. The returned Z is always projected row-wise
    onto the simplex; both raw and projected objectives are reported.
    Non-convergence is reported through the converged flag, never raised.
    """
    cfg = cfg or SolverConfig()
    if p.lam == 0 and p.ridge_epsilon == 0:
        return closed_form_lambda0(p.g)

    split = _split_structure(p.laplacian.matrix)
    if split.component_count == 1:
        return _solve_connected(p, cfg, warm)

    n, k = p.n, p.k
    z = np.zeros((n, k))
    pi = np.zeros(n)
    m = np.zeros((n, k))
    per_comp = []
    iterations = 0
    converged = True
    obj_raw = 0.0
    for cid in range(1, split.component_count + 1):
        idx = split.indices(cid)
        sub_lap = GraphLaplacian(
            matrix=p.laplacian.matrix[np.ix_(idx, idx)].tocsr(),
            degrees=p.laplacian.degrees[idx],
            normalized=p.laplacian.normalized,
        )
        sub = Problem(laplacian=sub_lap, g=p.g[idx], lam=p.lam,
                      ridge_epsilon=p.ridge_epsilon,
                      strict_laplacian=p.strict_laplacian,
                      check_affinity_range=False)
        sub_warm = None
        if warm is not None:
            sub_warm = (warm[0][idx], warm[1][idx])
        sol = _solve_connected(sub, cfg, sub_warm)
        z[idx] = sol.z
        pi[idx] = sol.pi
        m[idx] = sol.m
        iterations = max(iterations, sol.iterations)
        converged = converged and sol.converged
        obj_raw += sol.objective_raw
        per_comp.append({"component": cid, "size": int(idx.size),
                         "iterations": sol.iterations, "converged": sol.converged,
                         "rho": sol.diagnostics.get("rho")})
    report = kkt_residuals(p, z, pi, m)
    return Solution(
        z=z, pi=pi, m=m, kkt=report,
        objective=objective(p, z), objective_raw=obj_raw,
        iterations=iterations, converged=converged,
        uniqueness=uniqueness_certificate(z),
        diagnostics={"components": per_comp, "backend": cfg.backend},
    )
