"""File formats: CSV for dense data, Matrix Market for sparse, JSON metadata.

Floats are written with 17 significant digits so every round-trip is exact.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .graph import SparseSimilarity

BUNDLE_VERSION = 1


class ParseError(ValueError):
    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


def read_points_csv(path) -> np.ndarray:
    """Dense point set, one row per item; reports the offending line on error."""
    rows = []
    width = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split(",")
            try:
                row = [float(x) for x in parts]
            except ValueError:
                raise ParseError(path, lineno, f"could not parse {text!r} as numbers")
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ParseError(path, lineno,
                                 f"expected {width} columns, found {len(row)}")
            rows.append(row)
    if not rows:
        return np.zeros((0, 0))
    return np.array(rows, dtype=float)


def write_dense_csv(path, a: np.ndarray) -> None:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    np.savetxt(path, a, delimiter=",", fmt="%.17e")


def read_dense_csv(path) -> np.ndarray:
    return read_points_csv(path)


def write_matrix_market(path, matrix, symmetric: bool | None = None) -> None:
    """Coordinate-format Matrix Market file with exact decimal serialization.

    Symmetric matrices are stored as their lower triangle with the
    'symmetric' kind.
    """
    m = sp.coo_matrix(matrix)
    if symmetric is None:
        symmetric = m.shape[0] == m.shape[1] and (abs(m - m.T)).nnz == 0
    rows, cols, data = m.row, m.col, m.data
    if symmetric:
        keep = rows >= cols
        rows, cols, data = rows[keep], cols[keep], data[keep]
    order = np.lexsort((rows, cols))
    rows, cols, data = rows[order], cols[order], data[order]
    kind = "symmetric" if symmetric else "general"
    with open(path, "w") as fh:
        fh.write(f"%%MatrixMarket matrix coordinate real {kind}\n")
        fh.write(f"{m.shape[0]} {m.shape[1]} {len(data)}\n")
        for r, c, v in zip(rows, cols, data):
            fh.write(f"{r + 1} {c + 1} {v:.17g}\n")


def read_matrix_market(path) -> sp.csr_matrix:
    return sp.csr_matrix(scipy.io.mmread(str(path)))


def read_similarity(path) -> SparseSimilarity:
    m = read_matrix_market(path)
    m.setdiag(0.0)
    m.eliminate_zeros()
    if (m != m.T).nnz != 0:
        raise ValueError(f"{path}: similarity matrix must be symmetric")
    return SparseSimilarity(matrix=m, symmetric=True)


def read_affinities(path, n: int | None = None) -> np.ndarray:
    """Affinity matrix from .mtx (sparse, canonical) or .csv (dense)."""
    path = Path(path)
    if path.suffix == ".mtx":
        g = np.asarray(read_matrix_market(path).todense())
    else:
        g = read_dense_csv(path)
    if n is not None and g.shape[0] != n:
        raise ValueError(f"affinities have {g.shape[0]} rows, expected {n}")
    return g


def graph_fingerprint(w: SparseSimilarity) -> str:
    m = w.matrix.tocoo()
    order = np.lexsort((m.col, m.row))
    h = hashlib.sha256()
    h.update(np.int64(m.shape[0]).tobytes())
    h.update(m.row[order].astype(np.int64).tobytes())
    h.update(m.col[order].astype(np.int64).tobytes())
    h.update(m.data[order].astype(np.float64).tobytes())
    return h.hexdigest()


@dataclass
class ModelBundle:
    """Persisted training result: Z plus metadata and diagnostics."""

    z: np.ndarray
    lam: float
    meta: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def k(self) -> int:
        return self.z.shape[1]

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        write_dense_csv(directory / "Z.csv", self.z)
        meta = {
            "version": BUNDLE_VERSION,
            "n": int(self.z.shape[0]),
            "k": int(self.z.shape[1]),
            "lambda": float(self.lam),
            **self.meta,
        }
        with open(directory / "meta.json", "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
        with open(directory / "diagnostics.json", "w") as fh:
            json.dump(self.diagnostics, fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, directory) -> "ModelBundle":
        directory = Path(directory)
        with open(directory / "meta.json") as fh:
            meta = json.load(fh)
        version = meta.get("version")
        if version != BUNDLE_VERSION:
            raise ValueError(f"unknown model bundle version {version!r}")
        z = read_dense_csv(directory / "Z.csv")
        if z.shape[0] != meta["n"]:
            raise ValueError(
                f"bundle Z has {z.shape[0]} rows but metadata says {meta['n']}")
        diagnostics = {}
        diag_path = directory / "diagnostics.json"
        if diag_path.exists():
            with open(diag_path) as fh:
                diagnostics = json.load(fh)
        lam = meta.pop("lambda")
        meta.pop("version")
        return cls(z=z, lam=lam, meta=meta, diagnostics=diagnostics)
