"""Out-of-sample assignment: crowd average, affinity pull, simplex projection.

A query supplies similarities w to the training items and affinities g to
the categories; the prediction is the projection of zbar + gamma*g onto the
simplex, where zbar is the degree-weighted average of training assignments
and gamma = 1 / (2*lam*sum(w)).
"""

from __future__ import annotations

import hashlib
import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .simplex import project_simplex


@dataclass
class TrainedModel:
    """Trained assignments plus the lambda they were trained with."""

    z: np.ndarray
    lam: float

    def __post_init__(self):
        self.z = np.atleast_2d(np.asarray(self.z, dtype=float))

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def k(self) -> int:
        return self.z.shape[1]


@dataclass
class OosQuery:
    w: np.ndarray
    g: np.ndarray
    lam: float


@dataclass
class OosPrediction:
    z: np.ndarray
    zbar: np.ndarray | None
    gamma: float | None
    mode: str  # {"projected", "lambda0_closed_form", "crowd_only"}
    tie: bool = False
    warning: str | None = None
    cache_hit: bool = False


class ZbarCache:
    """Bounded, thread-safe cache of crowd averages keyed by the content of w.

    A hit returns the identical array that a recomputation would produce.
    """

    def __init__(self, max_entries: int = 128):
        self.max_entries = max_entries
        self._data: OrderedDict[str, np.ndarray] = OrderedDict()
        self._lock = threading.Lock()

    @staticmethod
    def key(w: np.ndarray) -> str:
        return hashlib.sha256(w.tobytes()).hexdigest()

    def get_or_compute(self, w: np.ndarray, compute) -> tuple[np.ndarray, bool]:
        key = self.key(w)
        with self._lock:
            if key in self._data:
                self._data.move_to_end(key)
                return self._data[key], True
        value = np.asarray(compute(), dtype=float)
        value.setflags(write=False)
        with self._lock:
            if key not in self._data:
                self._data[key] = value
                if len(self._data) > self.max_entries:
                    self._data.popitem(last=False)
            return self._data[key], False


def _as_weight_vector(w, n: int) -> np.ndarray:
    if sp.issparse(w):
        w = np.asarray(w.todense()).ravel()
    w = np.asarray(w, dtype=float).ravel()
    if w.shape[0] != n:
        raise ValueError(f"similarity vector has length {w.shape[0]}, model has {n} items")
    if w.size and w.min() < 0:
        raise ValueError("similarity weights must be nonnegative")
    return w


def crowd_average(z: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Weighted average of training assignments, z.T @ w / sum(w)."""
    return z.T @ w / w.sum()


def oos_predict(model: TrainedModel, q: OosQuery,
                cache: ZbarCache | None = None) -> OosPrediction:
    """Predict the assignment vector for one query.

    Dispatch: lam = 0 or w = 0 falls back to the highest-affinity category
    (uniform with a warning when g is also zero); g = 0 returns the crowd
    average unchanged; otherwise the projection of zbar + gamma*g.
    """
    w = _as_weight_vector(q.w, model.n)
    g = np.asarray(q.g, dtype=float).ravel()
    if g.shape[0] != model.k:
        raise ValueError(f"affinity vector has length {g.shape[0]}, model has {model.k} categories")
    if q.lam < 0:
        raise ValueError("lambda must be nonnegative")
    wsum = float(w.sum())
    k = model.k

    zbar = None
    hit = False
    if wsum > 0:
        if cache is not None:
            zbar, hit = cache.get_or_compute(w, lambda: crowd_average(model.z, w))
        else:
            zbar = crowd_average(model.z, w)

    if q.lam == 0 or wsum == 0:
        if not g.any():
            z = np.full(k, 1.0 / k)
            return OosPrediction(z=z, zbar=zbar, gamma=None, mode="lambda0_closed_form",
                                 tie=True, cache_hit=hit,
                                 warning="no similarity or affinity information; "
                                         "returning the uniform assignment")
        kmax = int(g.argmax())
        z = np.zeros(k)
        z[kmax] = 1.0
        tie = bool((g == g[kmax]).sum() > 1)
        return OosPrediction(z=z, zbar=zbar, gamma=None,
                             mode="lambda0_closed_form", tie=tie, cache_hit=hit)

    gamma = 1.0 / (2.0 * q.lam * wsum)
    if not g.any():
        return OosPrediction(z=np.array(zbar, dtype=float), zbar=zbar, gamma=gamma,
                             mode="crowd_only", cache_hit=hit)
    z = project_simplex(zbar + gamma * g)
    return OosPrediction(z=z, zbar=zbar, gamma=gamma, mode="projected", cache_hit=hit)


def lambda_path(model: TrainedModel, w, g, lambdas,
                cache: ZbarCache | None = None) -> list[OosPrediction]:
    """Evaluate the query along a list of lambda values, reusing zbar."""
    lambdas = list(lambdas)
    if any(lam <= 0 for lam in lambdas):
        raise ValueError("lambda values on the path must be positive")
    cache = cache or ZbarCache(max_entries=2)
    return [oos_predict(model, OosQuery(w=w, g=g, lam=lam), cache=cache)
            for lam in lambdas]


def whatif(model: TrainedModel, w, g_edits: dict[int, float], lam: float,
           cache: ZbarCache | None = None) -> OosPrediction:
    """What-if query: category overrides applied to an all-ignorance g."""
    g = np.zeros(model.k)
    for idx, val in g_edits.items():
        if not 0 <= int(idx) < model.k:
            raise ValueError(f"override index {idx} out of range for K={model.k}")
        if not -1.0 <= val <= 1.0:
            raise ValueError(f"override value {val} outside [-1, 1]")
        g[int(idx)] = float(val)
    return oos_predict(model, OosQuery(w=w, g=g, lam=lam), cache=cache)
