"""Tests for the windowed nearest-neighbor GP pipeline and its baseline."""

import numpy as np
import pytest

from breathflow import (
    CoupledSubjectConfig,
    FeatureMatrix,
    PipelineConfig,
    ScalingParams,
    SubjectRecord,
    TrainingPool,
    build_training_set,
    gen_coupled_subject,
    inter_pool,
    intra_pool,
    knn_search,
    loclm_baseline,
    predict_window,
    prepare_subject,
    rmse_reduction,
    run_pipeline,
)
from breathflow.locgp import LocalGaussianProcess


def identity_scaling(n_cols):
    return ScalingParams(
        mean=np.zeros(n_cols), sd=np.ones(n_cols), constant=np.zeros(n_cols, bool)
    )


def hand_pool(x, y=None, mode="intra"):
    x = np.asarray(x, dtype=float)
    if y is None:
        y = np.zeros(len(x))
    return TrainingPool(
        x=x,
        y=np.asarray(y, dtype=float),
        subject_ids=("s",) * len(x),
        sample_indices=np.arange(len(x)),
        mode=mode,
        scaling=identity_scaling(x.shape[1]),
    )


@pytest.fixture(scope="module")
def subject_240():
    cfg = PipelineConfig()
    sim = gen_coupled_subject(7, CoupledSubjectConfig(duration=240.0))
    record = SubjectRecord("s7", sim.abd, sim.tho, sim.flow)
    return prepare_subject(record, cfg), cfg


class TestKnnSearch:
    def test_exact_match(self):
        pool = hand_pool([[0.0], [1.0], [2.0]])
        idx = knn_search(np.array([1.0]), pool, k=1)
        np.testing.assert_array_equal(idx, [1])

    def test_hand_distances(self):
        pool = hand_pool([[0.0], [1.0], [2.0]])
        idx = knn_search(np.array([0.9]), pool, k=2)
        np.testing.assert_array_equal(idx, [1, 0])

    def test_k_at_least_pool_size(self):
        pool = hand_pool([[0.0], [1.0]])
        idx = knn_search(np.array([5.0]), pool, k=10)
        np.testing.assert_array_equal(sorted(idx), [0, 1])

    def test_tie_breaks_to_earlier_index(self):
        pool = hand_pool([[1.0], [1.0], [2.0]])
        idx = knn_search(np.array([1.0]), pool, k=1)
        np.testing.assert_array_equal(idx, [0])

    def test_empty_pool_errors(self):
        pool = hand_pool(np.zeros((0, 1)))
        with pytest.raises(ValueError):
            knn_search(np.array([0.0]), pool, k=1)


class TestBuildTrainingSet:
    def test_identical_queries_collapse(self):
        pool = hand_pool([[0.0], [1.0], [2.0], [3.0]], y=[0, 1, 2, 3])
        queries = np.tile([[1.2]], (5, 1))
        x, y = build_training_set(queries, pool, k=2)
        assert len(x) == 2
        np.testing.assert_array_equal(y, [1.0, 2.0])

    def test_disjoint_unions_add(self):
        pool = hand_pool(
            [[0.0], [0.1], [0.2], [10.0], [10.1], [10.2]], y=np.arange(6)
        )
        queries = np.array([[0.1], [10.1]])
        x, y = build_training_set(queries, pool, k=3)
        assert len(x) == 6

    def test_union_bound_and_order(self):
        rng = np.random.default_rng(0)
        pool = hand_pool(rng.standard_normal((50, 3)), y=np.arange(50))
        queries = rng.standard_normal((20, 3))
        x, y = build_training_set(queries, pool, k=3)
        assert len(x) <= 60
        # responses carry the pool index here, so ascending order shows
        assert np.all(np.diff(y) > 0)


class TestIntraPool:
    def test_causality(self, subject_240):
        subject, cfg = subject_240
        win = cfg.window_samples
        for window in (1, 3, 5):
            pool = intra_pool(subject, window * win, cfg)
            assert len(pool) > 0
            assert pool.sample_indices.max() < window * win

    def test_pool_grows_with_window(self, subject_240):
        subject, cfg = subject_240
        win = cfg.window_samples
        sizes = [len(intra_pool(subject, w * win, cfg)) for w in range(1, 8)]
        assert all(b >= a for a, b in zip(sizes, sizes[1:]))

    def test_earlier_pool_is_prefix(self, subject_240):
        subject, cfg = subject_240
        win = cfg.window_samples
        small = intra_pool(subject, 2 * win, cfg)
        large = intra_pool(subject, 3 * win, cfg)
        np.testing.assert_array_equal(
            small.sample_indices, large.sample_indices[: len(small)]
        )


class TestPredictWindow:
    def make_subject(self, n=240, d=6, seed=1):
        rng = np.random.default_rng(seed)
        base = rng.standard_normal((n, d))
        # window 5 repeats the rows of samples 0..19 exactly
        base[100:120] = base[0:20]
        flow = np.tanh(base[:, 0]) + 0.3 * base[:, 1]
        names = tuple(f"c{i}" for i in range(d))
        fm = FeatureMatrix(base, names, "lagged")
        subject = type(
            "Sub",
            (),
            dict(
                subject_id="toy",
                lagged=fm,
                unlagged=fm,
                flow=flow,
                fs=10.0,
                n_samples=n,
                aligned_unlagged=lambda self: fm,
            ),
        )()
        return subject, flow

    def make_cfg(self, **kw):
        return PipelineConfig(window_seconds=2.0, min_pool=10, **kw)

    def test_warmup_window_skipped(self, subject_240):
        subject, cfg = subject_240
        pool = intra_pool(subject, 0, cfg)
        pred = predict_window(0, subject, pool, cfg)
        assert pred.skipped
        assert pred.reason == "insufficient history"

    def test_small_pool_skipped(self, subject_240):
        subject, cfg = subject_240
        win = cfg.window_samples
        pool = intra_pool(subject, 1 * win, cfg)
        tiny = PipelineConfig(min_pool=10**6)
        pred = predict_window(1, subject, pool, tiny)
        assert pred.skipped
        assert pred.reason == "insufficient history"

    def test_duplicated_pool_interpolates(self):
        subject, flow = self.make_subject()
        cfg = self.make_cfg()
        pool = intra_pool(subject, 100, cfg)
        pred = predict_window(5, subject, pool, cfg)
        assert not pred.skipped
        np.testing.assert_array_equal(pred.sample_indices, np.arange(100, 120))
        np.testing.assert_allclose(pred.mean, flow[100:120], atol=1e-3)
        assert np.all(pred.sd >= 0)
        assert pred.params["tau2"] <= 1e-4

    def test_prediction_quality_after_warmup(self, subject_240):
        subject, cfg = subject_240
        win = cfg.window_samples
        scores = []
        for window in range(2, 8):
            pool = intra_pool(subject, window * win, cfg)
            pred = predict_window(window, subject, pool, cfg)
            assert not pred.skipped
            truth = subject.flow[pred.sample_indices]
            scores.append(rmse_reduction(pred.mean, truth))
        # short recording, small pools; the long-run benchmark sits higher
        assert np.median(scores) >= 0.8

    def test_window_length_invariant(self, subject_240):
        subject, cfg = subject_240
        win = cfg.window_samples
        pool = intra_pool(subject, 2 * win, cfg)
        pred = predict_window(2, subject, pool, cfg)
        assert len(pred.mean) == len(pred.sd) == win == len(pred.sample_indices)


class TestLoclmBaseline:
    def make_linear_subject(self, n=300, d=24, seed=3):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((n, d))
        w = rng.standard_normal(d)
        flow = x @ w + 1.5
        names = tuple(f"c{i}" for i in range(d))
        fm = FeatureMatrix(x, names, "raw")
        subject = type(
            "Sub",
            (),
            dict(
                subject_id="lin",
                lagged=fm,
                unlagged=fm,
                flow=flow,
                fs=10.0,
                n_samples=n,
                aligned_unlagged=lambda self: fm,
            ),
        )()
        return subject, flow

    def test_recovers_linear_map(self):
        subject, flow = self.make_linear_subject()
        cfg = PipelineConfig(window_seconds=3.0, min_pool=30)
        pool = intra_pool(subject, 150, cfg, lagged=False)
        pred = loclm_baseline(5, subject, pool, cfg)
        assert not pred.skipped
        truth = flow[pred.sample_indices]
        assert rmse_reduction(pred.mean, truth) >= 0.999
        assert pred.model == "loclm"

    def test_constant_response(self):
        subject, _ = self.make_linear_subject()
        subject.flow = np.full(subject.n_samples, 2.5)
        cfg = PipelineConfig(window_seconds=3.0, min_pool=30)
        pool = intra_pool(subject, 150, cfg, lagged=False)
        pred = loclm_baseline(5, subject, pool, cfg)
        np.testing.assert_allclose(pred.mean, 2.5, atol=1e-8)

    def test_sd_is_constant_rse(self):
        subject, _ = self.make_linear_subject()
        cfg = PipelineConfig(window_seconds=3.0, min_pool=30)
        pool = intra_pool(subject, 150, cfg, lagged=False)
        pred = loclm_baseline(5, subject, pool, cfg)
        assert np.all(pred.sd == pred.sd[0])
        assert pred.sd[0] >= 0


class TestRunPipeline:
    def test_intra_single_subject(self, subject_240):
        subject, cfg = subject_240
        result = run_pipeline([subject], cfg)
        assert result.mode == "intra"
        preds = result.predictions["s7"]
        locgp_preds = [p for p in preds if p.model == "locgp"]
        assert locgp_preds[0].skipped
        assert all(not p.skipped for p in locgp_preds[1:])
        summary = result.summary["locgp"]
        assert summary["n_windows"] == len(locgp_preds) - 1
        assert summary["median_rmse_reduction"] > 0.8

    def test_determinism(self, subject_240):
        subject, cfg = subject_240
        a = run_pipeline([subject], cfg)
        b = run_pipeline([subject], cfg)
        for pa, pb in zip(a.predictions["s7"], b.predictions["s7"]):
            np.testing.assert_array_equal(pa.mean, pb.mean)
            np.testing.assert_array_equal(pa.sd, pb.sd)
        assert a.scores == b.scores
        assert a.summary == b.summary

    def test_baseline_rows_appear(self, subject_240):
        subject, _ = subject_240
        cfg = PipelineConfig(baseline=True)
        result = run_pipeline([subject], cfg)
        models = {p.model for p in result.predictions["s7"]}
        assert models == {"locgp", "loclm"}
        assert "loclm" in result.summary

    def test_diffusion_model_name(self, subject_240):
        subject, _ = subject_240
        cfg = PipelineConfig(diffusion=True)
        result = run_pipeline([subject], cfg)
        assert set(result.summary) == {"locdbgp"}

    def test_inter_mode_leakage_freedom(self):
        cfg_pipeline = PipelineConfig()
        sims = {
            name: gen_coupled_subject(seed, CoupledSubjectConfig(duration=120.0))
            for name, seed in (("A", 1), ("B", 2), ("C", 3))
        }
        records = [
            SubjectRecord(name, sim.abd, sim.tho, sim.flow)
            for name, sim in sims.items()
        ]
        prepared = [prepare_subject(r, cfg_pipeline) for r in records]
        pool = inter_pool(prepared[:2], cfg_pipeline)
        assert set(pool.subject_ids) == {"A", "B"}

        cfg = PipelineConfig(mode="inter", train_subjects=("A", "B"))
        result = run_pipeline(prepared, cfg)
        assert set(result.predictions) == {"C"}

    def test_inter_mode_overlap_errors(self, subject_240):
        subject, _ = subject_240
        cfg = PipelineConfig(
            mode="inter", train_subjects=("s7",), test_subjects=("s7",)
        )
        with pytest.raises(ValueError):
            run_pipeline([subject], cfg)

    def test_missing_flow_errors(self, subject_240):
        subject, cfg = subject_240
        sim = gen_coupled_subject(9, CoupledSubjectConfig(duration=120.0))
        record = SubjectRecord("noflow", sim.abd, sim.tho, flow=None)
        with pytest.raises(ValueError):
            run_pipeline([record], cfg)

    def test_duplicate_subject_ids_error(self, subject_240):
        subject, cfg = subject_240
        with pytest.raises(ValueError):
            run_pipeline([subject, subject], cfg)


class TestLocalGaussianProcessEstimator:
    def test_fit_predict(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((200, 5))
        y = np.sin(x[:, 0]) + 0.2 * x[:, 1]
        est = LocalGaussianProcess(k=5)
        est.fit(x, y)
        xq = rng.standard_normal((15, 5)) * 0.5
        mean = est.predict(xq)
        assert mean.shape == (15,)
        mean, sd = est.predict(xq, return_sd=True)
        assert np.all(sd >= 0)

    def test_params_round_trip(self):
        est = LocalGaussianProcess(k=7, family="matern_1_5", diffusion=True)
        params = est.get_params()
        assert params == {"k": 7, "family": "matern_1_5", "diffusion": True}
        rebuilt = LocalGaussianProcess(**params)
        assert rebuilt.get_params() == params
