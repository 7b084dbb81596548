"""Harmonic-function semisupervised baselines and the labeled-data reduction.

Covers the harmonic solve with clamped labels, its out-of-sample average,
class mass normalization (SSL1), the normalized-Laplacian variant (SSL2),
the epsilon-labeling conversion from partial affinities, and the LASS
problem with fixed labels reduced to the standard solver.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import core
from .graph import GraphLaplacian, SparseSimilarity, _split_structure, laplacian


class UnlabeledComponentError(ValueError):
    """A connected component has no labeled item, so its block is singular."""

    def __init__(self, component_id: int, members: np.ndarray):
        self.component_id = component_id
        self.members = members
        super().__init__(
            f"component {component_id} (items {members[:8].tolist()}"
            f"{'...' if members.size > 8 else ''}) contains no labeled item")


@dataclass
class LabeledSplit:
    labeled_indices: np.ndarray
    z_l: np.ndarray
    unlabeled_indices: np.ndarray

    def __post_init__(self):
        self.labeled_indices = np.asarray(self.labeled_indices, dtype=int)
        self.unlabeled_indices = np.asarray(self.unlabeled_indices, dtype=int)
        self.z_l = np.atleast_2d(np.asarray(self.z_l, dtype=float))
        if self.labeled_indices.size != self.z_l.shape[0]:
            raise ValueError("z_l must have one row per labeled index")
        both = np.concatenate([self.labeled_indices, self.unlabeled_indices])
        if np.unique(both).size != both.size:
            raise ValueError("labeled and unlabeled index sets must be disjoint")

    @classmethod
    def from_labels(cls, n: int, labeled_indices, z_l) -> "LabeledSplit":
        labeled = np.asarray(labeled_indices, dtype=int)
        mask = np.ones(n, dtype=bool)
        mask[labeled] = False
        return cls(labeled_indices=labeled, z_l=z_l,
                   unlabeled_indices=np.flatnonzero(mask))


def _check_labeled_components(structure: sp.spmatrix, labeled: np.ndarray) -> None:
    split = _split_structure(structure)
    labeled_set = set(labeled.tolist())
    for cid in range(1, split.component_count + 1):
        members = split.indices(cid)
        if not labeled_set.intersection(members.tolist()):
            raise UnlabeledComponentError(cid, members)


def _harmonic_blocks(lap: sp.spmatrix, split: LabeledSplit) -> np.ndarray:
    u, labeled = split.unlabeled_indices, split.labeled_indices
    lap = lap.tocsr()
    l_u = lap[np.ix_(u, u)].tocsc()
    l_ul = lap[np.ix_(u, labeled)]
    rhs = -np.asarray(l_ul @ split.z_l)
    if u.size == 0:
        return np.zeros((0, split.z_l.shape[1]))
    lu = spla.splu(l_u, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                   options=dict(SymmetricMode=True))
    return lu.solve(np.asfortranarray(rhs))


def harmonic_solve(l: GraphLaplacian, split: LabeledSplit) -> np.ndarray:
    """Harmonic labels Z_u = L_u^{-1} W_ul Z_l.

    When Z_l rows are valid assignments the output rows are too (maximum
    principle). Every connected component must contain a labeled item.
    """
    if split.labeled_indices.size + split.unlabeled_indices.size != l.n:
        raise ValueError("split does not cover the graph")
    _check_labeled_components(l.matrix, split.labeled_indices)
    return _harmonic_blocks(l.matrix, split)


def ssl2_solve(w: SparseSimilarity, split: LabeledSplit) -> np.ndarray:
    """Harmonic solve on the normalized Laplacian (SSL2).

    Output rows are generally not valid assignments.
    """
    _check_labeled_components(w.matrix, split.labeled_indices)
    lap = laplacian(w, normalized=True)
    return _harmonic_blocks(lap.matrix, split)


def ssl_oos(z: np.ndarray, w) -> np.ndarray:
    """Out-of-sample SSL prediction: the w-weighted average of trained labels."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if sp.issparse(w):
        w = np.asarray(w.todense()).ravel()
    w = np.asarray(w, dtype=float).ravel()
    if w.shape[0] != z.shape[0]:
        raise ValueError("similarity vector length must match the number of items")
    if w.size and w.min() < 0:
        raise ValueError("similarity weights must be nonnegative")
    if not w.any():
        raise ValueError("SSL out-of-sample requires a nonzero similarity vector")
    return z.T @ w / w.sum()


def class_mass_normalize(z: np.ndarray, priors: np.ndarray) -> np.ndarray:
    """Rescale columns so total predicted mass follows the class priors (SSL1).

    The output need not lie on the simplex; classification uses the row
    argmax. Zero columns with a nonzero prior are left zero with a warning.
    """
    z = np.atleast_2d(np.asarray(z, dtype=float))
    priors = np.asarray(priors, dtype=float).ravel()
    if priors.shape[0] != z.shape[1]:
        raise ValueError("priors length must match the number of categories")
    if priors.min() <= 0 or abs(priors.sum() - 1.0) > 1e-8:
        raise ValueError("priors must be positive and sum to 1")
    mass = z.sum(axis=0)
    scale = np.zeros_like(mass)
    live = mass > 0
    scale[live] = priors[live] / mass[live]
    if not live.all():
        warnings.warn("columns with zero predicted mass left unscaled despite nonzero prior")
    return z * scale


def labels_from_affinities(g_rows: np.ndarray, epsilon: float = 0.005
                           ) -> tuple[np.ndarray, np.ndarray]:
    """Convert ternary affinity rows into assignment rows.

    Per row: 1 for +1 affinities, epsilon for zeros, 0 for -1, then
    normalize. Rows with no nonzero affinity are left unlabeled and do not
    appear in the output. Returns (row_indices, assignment_rows).
    """
    g = np.atleast_2d(np.asarray(g_rows, dtype=float))
    if not 0 <= epsilon < 1:
        raise ValueError("epsilon must lie in [0, 1)")
    if not np.isin(g, (-1.0, 0.0, 1.0)).all():
        raise ValueError("the labeling procedure is defined for affinities in {-1, 0, +1}")
    converted = np.flatnonzero(np.abs(g).sum(axis=1) > 0)
    rows = []
    for i in converted:
        gi = g[i]
        if (gi == -1.0).all():
            raise ValueError(f"row {i} disallows every category; no mass can be placed")
        base = np.where(gi == 1.0, 1.0, np.where(gi == 0.0, epsilon, 0.0))
        if base.sum() == 0:  # epsilon = 0 and no positive affinity
            base = (gi == 0.0).astype(float)
        rows.append(base / base.sum())
    z_l = np.array(rows) if rows else np.zeros((0, g.shape[1]))
    return converted, z_l


def lass_with_labels(w: SparseSimilarity, g: np.ndarray, lam: float,
                     split: LabeledSplit, cfg: core.SolverConfig | None = None,
                     ridge_epsilon: float = 0.0) -> tuple[core.Solution, dict]:
    """LASS restricted to the unlabeled block with Z_l held fixed.

    Reduces to the standard solver on the Laplacian block L_u with the
    affinity term G_u + 2*lam*W_ul @ Z_l; with G_u = 0 and valid labels this
    reproduces the harmonic solution. The objective constant contributed by
    the fixed labeled block is reported separately.
    """
    z_l = split.z_l
    if z_l.size and (np.abs(z_l.sum(axis=1) - 1.0).max() > 1e-8 or z_l.min() < -1e-12):
        raise ValueError("labeled rows must lie on the probability simplex")
    g = np.atleast_2d(np.asarray(g, dtype=float))
    if g.shape[0] != w.n:
        raise ValueError("affinity matrix must cover all items")
    lap = laplacian(w, normalized=False)
    u, labeled = split.unlabeled_indices, split.labeled_indices
    l_u = lap.matrix[np.ix_(u, u)].tocsr()
    w_ul = w.matrix[np.ix_(u, labeled)]
    g_eff = g[u] + 2.0 * lam * np.asarray(w_ul @ z_l)
    sub = core.Problem(
        laplacian=GraphLaplacian(matrix=l_u, degrees=lap.degrees[u], normalized=False),
        g=g_eff, lam=lam, ridge_epsilon=ridge_epsilon,
        strict_laplacian=labeled.size == 0, check_affinity_range=False,
    )
    sol = core.solve(sub, cfg)
    l_l = lap.matrix[np.ix_(labeled, labeled)]
    const = lam * float((z_l * (l_l @ z_l)).sum()) - float((g[labeled] * z_l).sum())
    return sol, {"objective_constant": const}
