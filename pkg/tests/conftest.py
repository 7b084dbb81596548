import sys
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

sys.path.insert(0, str(Path(__file__).parent))

from lasskit.graph import GraphLaplacian, SparseSimilarity, laplacian


def similarity_from_dense(a) -> SparseSimilarity:
    m = sp.csr_matrix(np.asarray(a, dtype=float))
    m.setdiag(0.0)
    m.eliminate_zeros()
    return SparseSimilarity(matrix=m, symmetric=True)


def laplacian_from_dense(a, normalized=False) -> GraphLaplacian:
    return laplacian(similarity_from_dense(a), normalized=normalized)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def path3():
    """Path graph 1-2-3 with unit weights."""
    return laplacian_from_dense([[0, 1, 0], [1, 0, 1], [0, 1, 0]])


@pytest.fixture
def edge2():
    """Single edge on two vertices."""
    return laplacian_from_dense([[0, 1], [1, 0]])
