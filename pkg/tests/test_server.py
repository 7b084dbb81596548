"""HTTP service: endpoints, error contract, bitwise agreement with the library."""

import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from lasskit import io
from lasskit.oos import OosQuery, TrainedModel, oos_predict
from lasskit.server import create_app


@pytest.fixture
def ztrain(rng):
    return rng.dirichlet(np.ones(3), size=12)


@pytest.fixture
def client():
    return TestClient(create_app())


def load_inline(client, z, lam=1.0, model_id=None):
    body = {"z": z.tolist(), "lambda": lam}
    if model_id:
        body["id"] = model_id
    resp = client.post("/models", json=body)
    assert resp.status_code == 201, resp.text
    return resp.json()["id"]


class TestModelLifecycle:
    def test_healthz(self, client):
        assert client.get("/healthz").json() == {"status": "ok"}

    def test_load_inline_and_meta(self, client, ztrain):
        model_id = load_inline(client, ztrain, lam=0.5)
        meta = client.get(f"/models/{model_id}").json()
        assert meta["n"] == 12 and meta["k"] == 3 and meta["lambda"] == 0.5

    def test_load_from_bundle_path(self, client, ztrain, tmp_path):
        io.ModelBundle(z=ztrain, lam=2.0, meta={"converged": True}).save(tmp_path / "m")
        resp = client.post("/models", json={"path": str(tmp_path / "m")})
        assert resp.status_code == 201
        meta = client.get(f"/models/{resp.json()['id']}").json()
        assert meta["lambda"] == 2.0
        assert meta["converged"] is True

    def test_corrupt_bundle_400_with_location(self, client, ztrain, tmp_path):
        io.ModelBundle(z=ztrain, lam=1.0).save(tmp_path / "m")
        zpath = tmp_path / "m" / "Z.csv"
        zpath.write_text(zpath.read_text().replace("e", "x", 1))
        resp = client.post("/models", json={"path": str(tmp_path / "m")})
        assert resp.status_code == 400
        assert "Z.csv:1" in resp.json()["detail"]

    def test_duplicate_id_409(self, client, ztrain):
        load_inline(client, ztrain, model_id="twin")
        resp = client.post("/models", json={"z": ztrain.tolist(), "lambda": 1.0,
                                            "id": "twin"})
        assert resp.status_code == 409

    def test_unknown_model_404(self, client):
        resp = client.post("/models/nope/predict",
                           json={"w": [1.0], "g": [0.5], "lambda": 1.0})
        assert resp.status_code == 404


class TestPredictEndpoint:
    def test_matches_library_bitwise(self, client, ztrain, rng):
        model_id = load_inline(client, ztrain, lam=1.0)
        model = TrainedModel(z=ztrain, lam=1.0)
        for _ in range(10):
            w = (rng.random(12) * (rng.random(12) < 0.6)).tolist()
            g = rng.uniform(-1, 1, size=3).tolist()
            lam = float(rng.uniform(0.05, 5.0))
            resp = client.post(f"/models/{model_id}/predict",
                               json={"w": w, "g": g, "lambda": lam})
            assert resp.status_code == 200
            body = resp.json()
            expected = oos_predict(model, OosQuery(w=np.array(w), g=np.array(g),
                                                   lam=lam))
            assert body["z"] == expected.z.tolist()
            assert body["mode"] == expected.mode
            if expected.zbar is not None:
                assert body["zbar"] == np.asarray(expected.zbar).tolist()
            assert body["gamma"] == expected.gamma

    def test_crowd_only_when_g_zero(self, client, ztrain, rng):
        model_id = load_inline(client, ztrain)
        w = rng.random(12).tolist()
        resp = client.post(f"/models/{model_id}/predict",
                           json={"w": w, "g": [0.0, 0.0, 0.0], "lambda": 2.0})
        body = resp.json()
        assert body["mode"] == "crowd_only"
        assert body["z"] == body["zbar"]

    def test_sparse_w_and_cache_flag(self, client, ztrain):
        model_id = load_inline(client, ztrain)
        payload = {"w": {"indices": [2, 7], "values": [0.5, 0.5]},
                   "g": [0.1, 0.0, -0.1], "lambda": 1.0}
        first = client.post(f"/models/{model_id}/predict", json=payload).json()
        second = client.post(f"/models/{model_id}/predict", json=payload).json()
        assert not first["cache_hit"] and second["cache_hit"]
        assert first["z"] == second["z"]

    def test_zero_w_closed_form_mode(self, client, ztrain):
        model_id = load_inline(client, ztrain)
        resp = client.post(f"/models/{model_id}/predict",
                           json={"w": [0.0] * 12, "g": [0.9, 0.0, -0.5],
                                 "lambda": 0.0})
        body = resp.json()
        assert body["mode"] == "lambda0_closed_form"
        assert body["z"] == [1.0, 0.0, 0.0]

    def test_nonpositive_lambda_with_nonzero_w_422(self, client, ztrain):
        model_id = load_inline(client, ztrain)
        resp = client.post(f"/models/{model_id}/predict",
                           json={"w": [1.0] + [0.0] * 11, "g": [0.0, 0.0, 0.0],
                                 "lambda": 0.0})
        assert resp.status_code == 422

    def test_dimension_mismatch_422(self, client, ztrain):
        model_id = load_inline(client, ztrain)
        resp = client.post(f"/models/{model_id}/predict",
                           json={"w": [1.0, 2.0], "g": [0.0, 0.0, 0.0],
                                 "lambda": 1.0})
        assert resp.status_code == 422
        resp = client.post(f"/models/{model_id}/predict",
                           json={"w": [1.0] * 12, "g": [0.0], "lambda": 1.0})
        assert resp.status_code == 422

    def test_negative_w_422(self, client, ztrain):
        model_id = load_inline(client, ztrain)
        resp = client.post(f"/models/{model_id}/predict",
                           json={"w": [-1.0] + [0.0] * 11, "g": [0.0] * 3,
                                 "lambda": 1.0})
        assert resp.status_code == 422


class TestPathEndpoint:
    def test_batch_shares_zbar(self, client, ztrain, rng):
        model_id = load_inline(client, ztrain)
        w = rng.random(12).tolist()
        resp = client.post(f"/models/{model_id}/path",
                           json={"w": w, "g": [1.0, 0.0, -1.0],
                                 "lambdas": [0.01, 1.0, 1e9]})
        preds = resp.json()["predictions"]
        assert len(preds) == 3
        assert [p["cache_hit"] for p in preds] == [False, True, True]
        # large-lambda endpoint approaches the crowd average
        np.testing.assert_allclose(preds[2]["z"], preds[2]["zbar"], atol=1e-8)

    def test_empty_lambdas(self, client, ztrain):
        model_id = load_inline(client, ztrain)
        resp = client.post(f"/models/{model_id}/path",
                           json={"w": [1.0] * 12, "g": [0.0] * 3, "lambdas": []})
        assert resp.status_code == 200
        assert resp.json()["predictions"] == []

    def test_path_matches_singleton_predicts(self, client, ztrain, rng):
        model_id = load_inline(client, ztrain)
        w = rng.random(12).tolist()
        g = [0.5, -0.5, 0.0]
        lams = [0.1, 1.0, 10.0]
        path = client.post(f"/models/{model_id}/path",
                           json={"w": w, "g": g, "lambdas": lams}).json()["predictions"]
        for lam, pred in zip(lams, path):
            single = client.post(f"/models/{model_id}/predict",
                                 json={"w": w, "g": g, "lambda": lam}).json()
            assert single["z"] == pred["z"]

    def test_nonpositive_lambda_422(self, client, ztrain):
        model_id = load_inline(client, ztrain)
        resp = client.post(f"/models/{model_id}/path",
                           json={"w": [1.0] * 12, "g": [0.0] * 3,
                                 "lambdas": [1.0, -2.0]})
        assert resp.status_code == 422

    def test_hundred_lambdas_on_large_model_under_half_second(self, client, rng):
        z = rng.dirichlet(np.ones(2), size=10_000)
        model_id = load_inline(client, z, lam=1.0)
        w = (rng.random(10_000) * (rng.random(10_000) < 0.01)).tolist()
        lambdas = np.logspace(-3, 3, 100).tolist()
        body = {"w": w, "g": [1.0, -1.0], "lambdas": lambdas}
        assert client.post(f"/models/{model_id}/path", json=body).status_code == 200
        import time

        t0 = time.perf_counter()
        resp = client.post(f"/models/{model_id}/path", json=body)
        elapsed = time.perf_counter() - t0
        assert resp.status_code == 200
        assert len(resp.json()["predictions"]) == 100
        assert elapsed < 0.5

    def test_concurrent_identical_requests_identical_bodies(self, client, ztrain, rng):
        from concurrent.futures import ThreadPoolExecutor

        model_id = load_inline(client, ztrain)
        payload = {"w": rng.random(12).tolist(), "g": [0.4, -0.1, 0.0],
                   "lambda": 0.9}

        def hit(_):
            return client.post(f"/models/{model_id}/predict", json=payload).content

        with ThreadPoolExecutor(max_workers=8) as pool:
            bodies = list(pool.map(hit, range(32)))
        import json as json_mod

        parsed = [json_mod.loads(b) for b in bodies]
        for body in parsed[1:]:
            assert body["z"] == parsed[0]["z"]
            assert body["zbar"] == parsed[0]["zbar"]

    def test_float_precision_round_trip(self, client, ztrain, rng):
        # serialized floats parse back to the exact binary values
        model_id = load_inline(client, ztrain)
        w = rng.random(12).tolist()
        resp = client.post(f"/models/{model_id}/predict",
                           json={"w": w, "g": [0.3, -0.2, 0.1], "lambda": 0.7})
        body = json.loads(resp.content)
        model = TrainedModel(z=ztrain, lam=1.0)
        expected = oos_predict(model, OosQuery(w=np.array(w),
                                               g=np.array([0.3, -0.2, 0.1]), lam=0.7))
        assert body["z"] == expected.z.tolist()
