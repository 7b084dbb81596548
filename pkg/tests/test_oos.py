"""Simplex projection and the out-of-sample mapping."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lasskit.oos import OosQuery, TrainedModel, ZbarCache, lambda_path, oos_predict, whatif
from lasskit.simplex import project_rows, project_simplex
from oracles import project_simplex_enum

vectors = st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=6)


class TestProjectSimplex:
    def test_already_feasible(self):
        v = np.array([0.2, 0.3, 0.5])
        np.testing.assert_allclose(project_simplex(v), v, atol=1e-15)

    def test_single_vertex(self):
        np.testing.assert_allclose(project_simplex(np.array([2.0, 0.0, 0.0])),
                                   [1.0, 0.0, 0.0], atol=1e-15)

    def test_affine_case(self):
        v = np.array([0.5, 0.2, -0.1])
        expected = v - (v.sum() - 1.0) / 3.0
        np.testing.assert_allclose(project_simplex(v), expected, atol=1e-15)
        assert expected.min() > 0

    def test_matches_enumeration_oracle(self, rng):
        for _ in range(1000):
            k = int(rng.integers(1, 7))
            v = rng.uniform(-3, 3, size=k)
            np.testing.assert_allclose(project_simplex(v), project_simplex_enum(v),
                                       atol=1e-10)

    def test_rowwise_matches_single(self, rng):
        z = rng.normal(size=(40, 5))
        rows = project_rows(z)
        for i in range(40):
            np.testing.assert_allclose(rows[i], project_simplex(z[i]), atol=1e-12)

    @given(vectors, st.floats(-100, 100, allow_nan=False))
    @settings(max_examples=200, deadline=None)
    def test_shift_invariance(self, v, t):
        v = np.asarray(v)
        np.testing.assert_allclose(project_simplex(v + t),
                                   project_simplex(v), atol=1e-12 * max(1, abs(t)))

    @given(vectors)
    @settings(max_examples=200, deadline=None)
    def test_idempotent(self, v):
        p1 = project_simplex(np.asarray(v))
        np.testing.assert_allclose(project_simplex(p1), p1, atol=1e-12)

    @given(st.integers(1, 6), st.data())
    @settings(max_examples=200, deadline=None)
    def test_nonexpansive(self, k, data):
        u = np.asarray(data.draw(st.lists(st.floats(-10, 10, allow_nan=False),
                                          min_size=k, max_size=k)))
        v = np.asarray(data.draw(st.lists(st.floats(-10, 10, allow_nan=False),
                                          min_size=k, max_size=k)))
        lhs = np.linalg.norm(project_simplex(u) - project_simplex(v))
        assert lhs <= np.linalg.norm(u - v) + 1e-12

    @given(vectors)
    @settings(max_examples=200, deadline=None)
    def test_output_feasible(self, v):
        p = project_simplex(np.asarray(v))
        assert abs(p.sum() - 1.0) < 1e-12
        assert p.min() >= 0


@pytest.fixture
def model(rng):
    z = rng.dirichlet(np.ones(3), size=10)
    return TrainedModel(z=z, lam=1.0)


class TestOosPredict:
    def test_indicator_weight_returns_training_row(self, model):
        w = np.zeros(10)
        w[4] = 1.0
        pred = oos_predict(model, OosQuery(w=w, g=np.zeros(3), lam=1.0))
        np.testing.assert_array_equal(pred.z, model.z[4])
        assert pred.mode == "crowd_only"

    def test_zero_weights_dispatch_to_closed_form(self, model):
        pred = oos_predict(model, OosQuery(w=np.zeros(10),
                                           g=np.array([0.3, -0.1, 0.7]), lam=1.0))
        np.testing.assert_array_equal(pred.z, [0, 0, 1])
        assert pred.mode == "lambda0_closed_form"
        assert pred.zbar is None

    def test_huge_lambda_returns_crowd(self, model, rng):
        w = rng.random(10)
        g = np.array([0.5, -0.5, 0.2])
        pred = oos_predict(model, OosQuery(w=w, g=g, lam=1e9))
        crowd = model.z.T @ w / w.sum()
        assert np.abs(pred.z - crowd).max() < 1e-6
        assert pred.mode == "projected"

    def test_doubly_degenerate_warns_uniform(self, model):
        pred = oos_predict(model, OosQuery(w=np.zeros(10), g=np.zeros(3), lam=0.0))
        np.testing.assert_allclose(pred.z, np.full(3, 1 / 3))
        assert pred.warning is not None
        assert pred.tie

    def test_negative_weights_rejected(self, model):
        w = np.zeros(10)
        w[0] = -0.5
        with pytest.raises(ValueError, match="nonnegative"):
            oos_predict(model, OosQuery(w=w, g=np.zeros(3), lam=1.0))

    def test_projected_mode_on_simplex(self, model, rng):
        for _ in range(25):
            w = rng.random(10) * (rng.random(10) < 0.5)
            g = rng.uniform(-1, 1, size=3)
            if not w.any():
                continue
            pred = oos_predict(model, OosQuery(w=w, g=g, lam=0.7))
            assert abs(pred.z.sum() - 1.0) < 1e-12
            assert pred.z.min() >= 0
            assert abs(pred.zbar.sum() - 1.0) < 1e-9
            assert pred.gamma == pytest.approx(1.0 / (2 * 0.7 * w.sum()))

    def test_cache_hit_identical(self, model, rng):
        cache = ZbarCache()
        w = rng.random(10)
        g = np.array([0.1, 0.0, -0.2])
        first = oos_predict(model, OosQuery(w=w, g=g, lam=1.0), cache=cache)
        second = oos_predict(model, OosQuery(w=w, g=g, lam=1.0), cache=cache)
        assert not first.cache_hit and second.cache_hit
        np.testing.assert_array_equal(first.z, second.z)
        np.testing.assert_array_equal(first.zbar, second.zbar)


class TestLambdaPath:
    def test_huge_lambda_endpoint_is_crowd(self, model, rng):
        w = rng.random(10)
        g = np.array([1.0, 0.0, -1.0])
        preds = lambda_path(model, w, g, [1e12])
        np.testing.assert_allclose(preds[0].z, preds[0].zbar, atol=1e-9)

    def test_tiny_lambda_near_vertex(self, model, rng):
        w = rng.random(10)
        g = np.array([0.9, 0.1, -0.5])
        preds = lambda_path(model, w, g, [1e-9])
        assert preds[0].z.max() > 0.999

    def test_repeated_lambda_deterministic(self, model, rng):
        w = rng.random(10)
        g = np.array([0.2, -0.3, 0.4])
        preds = lambda_path(model, w, g, [0.5, 0.5])
        np.testing.assert_array_equal(preds[0].z, preds[1].z)

    def test_empty_list(self, model):
        assert lambda_path(model, np.ones(10), np.zeros(3), []) == []

    def test_nonpositive_lambda_rejected(self, model):
        with pytest.raises(ValueError, match="positive"):
            lambda_path(model, np.ones(10), np.zeros(3), [1.0, 0.0])

    def test_zbar_computed_once(self, model, rng):
        cache = ZbarCache()
        w = rng.random(10)
        preds = lambda_path(model, w, np.array([0.5, 0.0, -0.5]),
                            [0.1, 1.0, 10.0], cache=cache)
        assert [p.cache_hit for p in preds] == [False, True, True]


class TestWhatIf:
    def test_no_edits_is_crowd_only(self, model, rng):
        w = rng.random(10)
        pred = whatif(model, w, {}, lam=1.0)
        assert pred.mode == "crowd_only"
        np.testing.assert_array_equal(pred.z, model.z.T @ w / w.sum())

    def test_positive_edit_increases_mass(self, model, rng):
        w = rng.random(10)
        base = whatif(model, w, {}, lam=0.05)
        edited = whatif(model, w, {1: 1.0}, lam=0.05)
        assert edited.z[1] > base.z[1]

    def test_negative_edit_never_increases_mass(self, model, rng):
        for _ in range(20):
            w = rng.random(10)
            base = whatif(model, w, {}, lam=0.5)
            edited = whatif(model, w, {2: -1.0}, lam=0.5)
            assert edited.z[2] <= base.z[2] + 1e-12

    def test_out_of_range_edit_rejected(self, model):
        with pytest.raises(ValueError, match="out of range"):
            whatif(model, np.ones(10), {7: 1.0}, lam=1.0)
        with pytest.raises(ValueError, match="outside"):
            whatif(model, np.ones(10), {1: 2.0}, lam=1.0)


class TestCacheConcurrency:
    def test_concurrent_identical_queries_identical_results(self, model, rng):
        from concurrent.futures import ThreadPoolExecutor

        cache = ZbarCache()
        w = rng.random(10)
        g = np.array([0.2, -0.4, 0.1])

        def query(_):
            return oos_predict(model, OosQuery(w=w, g=g, lam=0.8), cache=cache)

        with ThreadPoolExecutor(max_workers=8) as pool:
            preds = list(pool.map(query, range(64)))
        for pred in preds[1:]:
            np.testing.assert_array_equal(pred.z, preds[0].z)
            np.testing.assert_array_equal(pred.zbar, preds[0].zbar)

    def test_cache_eviction_bounded(self, model, rng):
        cache = ZbarCache(max_entries=4)
        for _ in range(20):
            w = rng.random(10)
            oos_predict(model, OosQuery(w=w, g=np.zeros(3), lam=1.0), cache=cache)
        assert len(cache._data) <= 4
