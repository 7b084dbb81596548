"""Item-item similarity graphs, their Laplacians, and spectral estimates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
from scipy.spatial import cKDTree


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class SparseSimilarity:
    """Symmetric nonnegative item-item similarity matrix W (no self-loops)."""

    matrix: sp.csr_matrix
    symmetric: bool = True

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def entries(self):
        """Coordinate list (row, col, weight) of the stored entries."""
        coo = self.matrix.tocoo()
        return list(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()))

    def validate(self, tol: float = 0.0) -> None:
        m = self.matrix
        if m.shape[0] != m.shape[1]:
            raise GraphError("similarity matrix must be square")
        if m.nnz and m.data.min() < -tol:
            raise GraphError("similarity weights must be nonnegative")
        if np.abs(m.diagonal()).max(initial=0.0) > tol:
            raise GraphError("self-loops are not allowed")
        if self.symmetric and (m != m.T).nnz != 0:
            raise GraphError("matrix marked symmetric but W != W.T")

    def degrees(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()


@dataclass(frozen=True)
class GraphLaplacian:
    """L = D - W (or the symmetric normalized variant)."""

    matrix: sp.csr_matrix
    degrees: np.ndarray
    normalized: bool = False

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class ComponentSplit:
    """Partition of vertices into connected components.

    Component ids start at 1 and are ordered by each component's lowest
    global vertex index.
    """

    component_count: int
    labels: np.ndarray
    permutations: list = field(default_factory=list)

    def indices(self, component_id: int) -> np.ndarray:
        return self.permutations[component_id - 1]


@dataclass(frozen=True)
class EigenEstimate:
    """Extreme eigenvalues of a Laplacian from power iteration."""

    sigma_min_nonzero: float
    sigma_max: float
    iterations_max: int
    iterations_min: int
    converged: bool
    residual_max: float
    residual_min: float


def build_knn_graph(points, k: int, kernel: str = "gaussian",
                    sigma: float = 1.0) -> SparseSimilarity:
    """k-nearest-neighbor similarity graph, symmetrized by elementwise max.

    kernel 'gaussian' uses exp(-(d/sigma)^2); 'binary' uses weight 1 for
    every directed kNN edge. Duplicate points (zero distance) get weight 1
    under the gaussian kernel.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        raise GraphError("points must be an N x D matrix")
    n = pts.shape[0]
    if n < 2:
        raise GraphError("need at least 2 points")
    if k < 1:
        raise GraphError("k must be >= 1")
    if k >= n:
        raise GraphError(f"k must be smaller than the number of points (k={k}, N={n})")
    if kernel not in ("gaussian", "binary"):
        raise GraphError(f"unknown kernel {kernel!r}")
    if kernel == "gaussian" and not sigma > 0:
        raise GraphError("gaussian kernel requires sigma > 0")

    tree = cKDTree(pts)
    dist, idx = tree.query(pts, k=k + 1)
    # drop the self hit, then keep the first k survivors per row; with
    # duplicate points the self index may be crowded out by zero-distance
    # ties, in which case the row already holds k+1 valid neighbors
    rows = np.repeat(np.arange(n), k + 1)
    cols = idx.ravel()
    dvals = dist.ravel()
    keep = cols != rows
    rows, cols, dvals = rows[keep], cols[keep], dvals[keep]
    first = np.searchsorted(rows, np.arange(n))
    take = (np.arange(rows.size) - first[rows]) < k
    rows, cols, dvals = rows[take], cols[take], dvals[take]

    if kernel == "gaussian":
        w = np.exp(-((dvals / sigma) ** 2))
    else:
        w = np.ones_like(dvals)
    directed = sp.coo_matrix((w, (rows, cols)), shape=(n, n)).tocsr()
    directed.sum_duplicates()
    symmetric = directed.maximum(directed.T).tocsr()
    symmetric.setdiag(0.0)
    symmetric.eliminate_zeros()
    return SparseSimilarity(matrix=symmetric, symmetric=True)


def laplacian(w: SparseSimilarity, normalized: bool = False) -> GraphLaplacian:
    """Graph Laplacian L = D - W, or I - D^(-1/2) W D^(-1/2).

    Zero-degree vertices keep a unit diagonal and zero off-diagonals in the
    normalized form.
    """
    m = w.matrix.tocsr()
    deg = np.asarray(m.sum(axis=1)).ravel()
    if not normalized:
        lap = sp.diags(deg) - m
        return GraphLaplacian(matrix=lap.tocsr(), degrees=deg, normalized=False)
    with np.errstate(divide="ignore"):
        dinv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)), 0.0)
    scale = sp.diags(dinv_sqrt)
    lap = sp.eye(w.n, format="csr") - scale @ m @ scale
    return GraphLaplacian(matrix=lap.tocsr(), degrees=deg, normalized=True)


def _split_structure(matrix: sp.spmatrix) -> ComponentSplit:
    """Component split of an undirected sparsity structure, deterministically
    labeled: the component containing the lowest global index gets id 1."""
    n = matrix.shape[0]
    _, raw = csgraph.connected_components(matrix, directed=False)
    seen: dict[int, int] = {}
    next_id = 0
    labels = np.zeros(n, dtype=int)
    for v in range(n):
        if raw[v] not in seen:
            next_id += 1
            seen[raw[v]] = next_id
        labels[v] = seen[raw[v]]
    perms = [np.flatnonzero(labels == cid) for cid in range(1, next_id + 1)]
    return ComponentSplit(component_count=next_id, labels=labels, permutations=perms)


def connected_components(w: SparseSimilarity) -> ComponentSplit:
    """Connected components of the similarity graph with deterministic ids."""
    return _split_structure(w.matrix)


def _power_iteration(matvec, n: int, tol: float, max_iter: int, rng) -> tuple:
    """Largest eigenvalue of a symmetric PSD operator by power iteration.

    Stops when the Rayleigh quotient stabilizes to relative tolerance tol.
    Returns (eigenvalue, iterations, residual_norm, converged).
    """
    v = rng.normal(size=n)
    v /= np.linalg.norm(v)
    lam_old = np.inf
    lam = 0.0
    w = matvec(v)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        lam = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            lam = 0.0
            converged = True
            break
        v = w / nw
        if abs(lam - lam_old) <= tol * max(abs(lam), np.finfo(float).tiny):
            converged = True
            w = matvec(v)
            break
        lam_old = lam
        w = matvec(v)
    residual = float(np.linalg.norm(w - lam * v))
    return lam, it, residual, converged


def extreme_eigenvalues(l: GraphLaplacian, tol: float = 1e-12,
                        max_iter: int = 200_000, seed: int = 0) -> EigenEstimate:
    """Smallest nonzero and largest eigenvalue of a connected graph Laplacian.

    sigma_max comes from power iteration on L. sigma_min comes from power
    iteration on (sigma_max*I - L) with the known null vector 1/sqrt(N)
    deflated, recovering sigma_min = sigma_max - mu_max. Non-convergence is
    reported through the converged flag with the best estimates attached.
    """
    m = l.matrix
    n = l.n
    rng = np.random.default_rng(seed)
    if n == 1:
        return EigenEstimate(0.0, 0.0, 0, 0, True, 0.0, 0.0)

    smax, it1, res1, ok1 = _power_iteration(lambda v: m @ v, n, tol, max_iter, rng)

    ones = np.ones(n) / np.sqrt(n)

    def shifted(v):
        v = v - (ones @ v) * ones
        w = smax * v - m @ v
        return w - (ones @ w) * ones

    mu, it2, res2, ok2 = _power_iteration(shifted, n, tol, max_iter, rng)
    smin = max(smax - mu, 0.0)
    return EigenEstimate(
        sigma_min_nonzero=float(smin),
        sigma_max=float(smax),
        iterations_max=it1,
        iterations_min=it2,
        converged=ok1 and ok2,
        residual_max=res1,
        residual_min=res2,
    )
