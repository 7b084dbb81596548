"""Read-only HTTP service for out-of-sample prediction and what-if queries.

Models are immutable once loaded; the per-model crowd-average cache is the
only synchronized state, so responses are deterministic and identical to
direct library calls.
"""

from __future__ import annotations

import itertools
import threading

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, ConfigDict, Field

from . import io, oos


class SparseVector(BaseModel):
    indices: list[int]
    values: list[float]


class LoadModelRequest(BaseModel):
    model_config = ConfigDict(protected_namespaces=())
    path: str | None = None
    z: list[list[float]] | None = None
    lam: float | None = Field(default=None, alias="lambda")
    id: str | None = None


class PredictRequest(BaseModel):
    model_config = ConfigDict(populate_by_name=True)
    w: list[float] | SparseVector
    g: list[float]
    lam: float = Field(alias="lambda")


class PathRequest(BaseModel):
    model_config = ConfigDict(populate_by_name=True)
    w: list[float] | SparseVector
    g: list[float]
    lambdas: list[float]


class ModelRegistry:
    def __init__(self, cache_entries: int = 128):
        self._lock = threading.Lock()
        self._models: dict[str, dict] = {}
        self._counter = itertools.count(1)
        self._cache_entries = cache_entries

    def add(self, model: oos.TrainedModel, meta: dict, model_id: str | None = None) -> str:
        with self._lock:
            if model_id is None:
                model_id = f"m{next(self._counter)}"
            if model_id in self._models:
                raise KeyError(model_id)
            model.z.setflags(write=False)
            self._models[model_id] = {
                "model": model,
                "meta": meta,
                "cache": oos.ZbarCache(max_entries=self._cache_entries),
            }
            return model_id

    def get(self, model_id: str) -> dict:
        with self._lock:
            if model_id not in self._models:
                raise KeyError(model_id)
            return self._models[model_id]


def _decode_w(w, n: int) -> np.ndarray:
    if isinstance(w, SparseVector):
        vec = np.zeros(n)
        idx = np.asarray(w.indices, dtype=int)
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise HTTPException(422, detail=f"w index out of range for N={n}")
        if idx.size != len(w.values):
            raise HTTPException(422, detail="w indices and values differ in length")
        vec[idx] = w.values
        return vec
    vec = np.asarray(w, dtype=float)
    if vec.shape[0] != n:
        raise HTTPException(422, detail=f"w has length {vec.shape[0]}, model has {n} items")
    return vec


def _prediction_body(pred: oos.OosPrediction) -> dict:
    return {
        "z": pred.z.tolist(),
        "zbar": None if pred.zbar is None else np.asarray(pred.zbar).tolist(),
        "gamma": pred.gamma,
        "mode": pred.mode,
        "tie": pred.tie,
        "warning": pred.warning,
        "cache_hit": pred.cache_hit,
    }


def _run_predict(entry: dict, w, g, lam: float) -> oos.OosPrediction:
    model: oos.TrainedModel = entry["model"]
    w_vec = _decode_w(w, model.n)
    if len(g) != model.k:
        raise HTTPException(422, detail=f"g has length {len(g)}, model has {model.k} categories")
    if w_vec.size and w_vec.min() < 0:
        raise HTTPException(422, detail="w entries must be nonnegative")
    if lam <= 0 and w_vec.any():
        raise HTTPException(422, detail="lambda must be positive when w is nonzero")
    if lam < 0:
        raise HTTPException(422, detail="lambda must be nonnegative")
    return oos.oos_predict(model, oos.OosQuery(w=w_vec, g=np.asarray(g, dtype=float),
                                               lam=lam), cache=entry["cache"])


def create_app(cache_entries: int = 128) -> FastAPI:
    app = FastAPI(title="lasskit", docs_url=None, redoc_url=None)
    # read-only service without credentials; lets the companion UI run on
    # a separate origin during development
    from fastapi.middleware.cors import CORSMiddleware

    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["GET", "POST"], allow_headers=["*"])
    registry = ModelRegistry(cache_entries=cache_entries)
    app.state.registry = registry

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/models", status_code=201)
    def load_model(req: LoadModelRequest):
        if req.path is not None:
            try:
                bundle = io.ModelBundle.load(req.path)
            except (ValueError, OSError, io.ParseError) as exc:
                raise HTTPException(400, detail=f"malformed bundle: {exc}")
            model = oos.TrainedModel(z=bundle.z, lam=bundle.lam)
            meta = {"n": bundle.n, "k": bundle.k, "lambda": bundle.lam,
                    **bundle.meta, "diagnostics": bundle.diagnostics}
        elif req.z is not None and req.lam is not None:
            try:
                z = np.asarray(req.z, dtype=float)
                model = oos.TrainedModel(z=z, lam=req.lam)
            except ValueError as exc:
                raise HTTPException(400, detail=f"malformed inline model: {exc}")
            meta = {"n": model.n, "k": model.k, "lambda": model.lam}
        else:
            raise HTTPException(400, detail="provide either path or inline z + lambda")
        try:
            model_id = registry.add(model, meta, req.id)
        except KeyError:
            raise HTTPException(409, detail=f"model id {req.id!r} already loaded")
        return {"id": model_id}

    @app.get("/models/{model_id}")
    def model_meta(model_id: str):
        try:
            entry = registry.get(model_id)
        except KeyError:
            raise HTTPException(404, detail=f"unknown model {model_id!r}")
        return entry["meta"]

    @app.post("/models/{model_id}/predict")
    def predict(model_id: str, req: PredictRequest):
        try:
            entry = registry.get(model_id)
        except KeyError:
            raise HTTPException(404, detail=f"unknown model {model_id!r}")
        pred = _run_predict(entry, req.w, req.g, req.lam)
        return _prediction_body(pred)

    @app.post("/models/{model_id}/path")
    def lambda_path(model_id: str, req: PathRequest):
        try:
            entry = registry.get(model_id)
        except KeyError:
            raise HTTPException(404, detail=f"unknown model {model_id!r}")
        if any(lam <= 0 for lam in req.lambdas):
            raise HTTPException(422, detail="all lambda values must be positive")
        return {"predictions": [
            _prediction_body(_run_predict(entry, req.w, req.g, lam))
            for lam in req.lambdas
        ]}

    return app


def load_bundle_into(app: FastAPI, path, model_id: str | None = None) -> str:
    """Preload a saved bundle into a running app's registry."""
    bundle = io.ModelBundle.load(path)
    model = oos.TrainedModel(z=bundle.z, lam=bundle.lam)
    meta = {"n": bundle.n, "k": bundle.k, "lambda": bundle.lam,
            **bundle.meta, "diagnostics": bundle.diagnostics}
    return app.state.registry.add(model, meta, model_id)
