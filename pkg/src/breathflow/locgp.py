"""Windowed airflow prediction with locally fitted Gaussian processes.

The recording is cut into non-overlapping windows.  For each window, the
feature rows of its samples are matched against a training pool (the same
subject's past in intra mode, other subjects in inter mode), the union of
their K nearest neighbors becomes the training set, and a fresh GP is fit
by maximum likelihood and evaluated over the window.  A linear baseline
fits ordinary least squares on the same neighborhoods using the unlagged
features.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator, RegressorMixin

from .config import PipelineConfig, decomposition_config
from .features import FeatureMatrix, ScalingParams, harmonic_features, lag_embed
from .gp import fit_mle
from .gp import predict as gp_predict
from .metrics import (
    WindowScore,
    coverage_rate,
    diff_rmse_reduction,
    global_align,
    rmse_reduction,
    summarize_windows,
)
from .ridge import harmonic_decompose
from .signal import TimeSeries, detrend_local_quadratic, resample
from .validation import as_float_vector

__all__ = [
    "SubjectRecord",
    "PreparedSubject",
    "TrainingPool",
    "WindowPrediction",
    "PipelineResult",
    "preprocess_channel",
    "prepare_subject",
    "knn_search",
    "build_training_set",
    "intra_pool",
    "inter_pool",
    "predict_window",
    "loclm_baseline",
    "score_predictions",
    "run_pipeline",
    "LocalGaussianProcess",
]

POOL_MODES = ("intra", "inter")


@dataclass(frozen=True)
class SubjectRecord:
    """Raw per-subject channels at a common sampling rate."""

    subject_id: str
    abd: TimeSeries
    tho: TimeSeries
    flow: TimeSeries | None = None  # optional for predict-only queries

    def __post_init__(self):
        channels = [self.abd, self.tho] + ([] if self.flow is None else [self.flow])
        if len({ts.fs for ts in channels}) != 1:
            raise ValueError("channels must share one sampling rate")
        if len({len(ts.samples) for ts in channels}) != 1:
            raise ValueError("channels must have equal length")


@dataclass(frozen=True)
class PreparedSubject:
    """A subject after preprocessing and feature extraction.

    ``lagged`` rows describe samples ``lagged.first_sample + i`` of the
    pipeline-rate series; ``unlagged`` covers every sample.  ``flow`` is the
    detrended pipeline-rate target, absent for predict-only subjects.
    """

    subject_id: str
    lagged: FeatureMatrix
    unlagged: FeatureMatrix
    flow: np.ndarray | None
    fs: float
    n_samples: int

    def aligned_unlagged(self) -> FeatureMatrix:
        """Unlagged features restricted to the rows the lag map covers."""
        offset = self.lagged.first_sample - self.unlagged.first_sample
        return FeatureMatrix(
            self.unlagged.values[offset:],
            self.unlagged.column_names,
            self.unlagged.stage,
            first_sample=self.lagged.first_sample,
        )


def preprocess_channel(ts: TimeSeries, cfg: PipelineConfig) -> TimeSeries:
    """Bring one channel to the pipeline rate and remove its slow trend."""
    if abs(ts.fs - cfg.fs) > 1e-9:
        ts = resample(ts, cfg.fs)
    return detrend_local_quadratic(ts, cfg.detrend_span_seconds)


def prepare_subject(record: SubjectRecord, cfg: PipelineConfig) -> PreparedSubject:
    """Resample, detrend, decompose, and feature-build one subject."""
    abd = preprocess_channel(record.abd, cfg)
    tho = preprocess_channel(record.tho, cfg)
    flow = preprocess_channel(record.flow, cfg) if record.flow is not None else None
    lengths = {len(abd.samples), len(tho.samples)}
    if flow is not None:
        lengths.add(len(flow.samples))
    if len(lengths) != 1:
        raise ValueError("channels diverged in length after resampling")

    dcfg = decomposition_config(cfg)
    features = harmonic_features(
        harmonic_decompose(abd, dcfg), harmonic_decompose(tho, dcfg)
    )
    return PreparedSubject(
        subject_id=record.subject_id,
        lagged=lag_embed(features, cfg.lag_width),
        unlagged=features,
        flow=None if flow is None else flow.samples,
        fs=cfg.fs,
        n_samples=len(abd.samples),
    )


@dataclass(frozen=True)
class TrainingPool:
    """Standardized candidate rows with responses and provenance.

    ``scaling`` holds the parameters that standardized ``x``; queries must
    go through the same transform before any distance computation.
    """

    x: np.ndarray
    y: np.ndarray
    subject_ids: tuple
    sample_indices: np.ndarray
    mode: str
    scaling: ScalingParams

    def __post_init__(self):
        if self.mode not in POOL_MODES:
            raise ValueError(f"mode must be one of {POOL_MODES}")
        n = len(self.y)
        if not (self.x.shape[0] == n == len(self.subject_ids) == len(self.sample_indices)):
            raise ValueError("pool fields disagree on row count")

    def __len__(self):
        return len(self.y)


def knn_search(query: np.ndarray, pool: TrainingPool, k: int) -> np.ndarray:
    """Indices of the k nearest pool rows, ties to the earlier index."""
    if len(pool) == 0:
        raise ValueError("training pool is empty")
    if k < 1:
        raise ValueError("k must be >= 1")
    query = as_float_vector(query, "query")
    if k >= len(pool):
        return np.arange(len(pool))
    dist = np.linalg.norm(pool.x - query, axis=1)
    return np.argsort(dist, kind="stable")[:k]


def _knn_union(queries: np.ndarray, pool: TrainingPool, k: int) -> np.ndarray:
    if len(pool) == 0:
        raise ValueError("training pool is empty")
    if k >= len(pool):
        return np.arange(len(pool))
    dmat = cdist(queries, pool.x)
    nearest = np.argsort(dmat, axis=1, kind="stable")[:, :k]
    return np.unique(nearest.ravel())


def build_training_set(window_queries, pool: TrainingPool, k: int):
    """Union of each query row's k nearest neighbors, ascending pool index."""
    window_queries = np.atleast_2d(np.asarray(window_queries, dtype=float))
    selected = _knn_union(window_queries, pool, k)
    return pool.x[selected], pool.y[selected]


def _make_pool(values, responses, ids, sample_indices, mode, scaling):
    values = np.asarray(values, dtype=float)
    if scaling is None:
        if len(values):
            scaling = ScalingParams.fit(values)
        else:
            width = values.shape[1] if values.ndim == 2 else 0
            scaling = ScalingParams(
                np.zeros(width), np.ones(width), np.zeros(width, dtype=bool)
            )
    return TrainingPool(
        x=scaling.apply(values) if len(values) else values,
        y=np.asarray(responses, dtype=float),
        subject_ids=tuple(ids),
        sample_indices=np.asarray(sample_indices, dtype=int),
        mode=mode,
        scaling=scaling,
    )


def intra_pool(
    subject: PreparedSubject,
    window_start: int,
    cfg: PipelineConfig,
    lagged: bool = True,
    scaling: ScalingParams | None = None,
) -> TrainingPool:
    """All of the subject's feature rows strictly earlier than the window.

    With ``scaling`` omitted the pool is standardized by its own statistics
    (the per-window mode); passing whole-series parameters gives the
    alternative standardization.
    """
    if subject.flow is None:
        raise ValueError("intra pool needs the subject's recorded flow")
    fm = subject.lagged if lagged else subject.aligned_unlagged()
    n_rows = max(0, min(window_start - fm.first_sample, fm.n_rows))
    samples = fm.first_sample + np.arange(n_rows)
    return _make_pool(
        fm.values[:n_rows],
        subject.flow[samples] if n_rows else np.empty(0),
        [subject.subject_id] * n_rows,
        samples,
        "intra",
        scaling,
    )


def inter_pool(
    train_subjects,
    cfg: PipelineConfig,
    lagged: bool = True,
    scaling: ScalingParams | None = None,
) -> TrainingPool:
    """Pool every training subject's rows (responses required)."""
    train_subjects = list(train_subjects)
    if not train_subjects:
        raise ValueError("inter pool needs at least one training subject")
    blocks, responses, ids, samples = [], [], [], []
    for subject in train_subjects:
        if subject.flow is None:
            raise ValueError(f"training subject {subject.subject_id!r} has no flow")
        fm = subject.lagged if lagged else subject.aligned_unlagged()
        idx = fm.first_sample + np.arange(fm.n_rows)
        blocks.append(fm.values)
        responses.append(subject.flow[idx])
        ids += [subject.subject_id] * fm.n_rows
        samples.append(idx)
    return _make_pool(
        np.vstack(blocks),
        np.concatenate(responses),
        ids,
        np.concatenate(samples),
        "inter",
        scaling,
    )


@dataclass(frozen=True)
class WindowPrediction:
    """One window's predictions plus the fit that produced them."""

    window: int
    t_start: float
    t_end: float
    model: str
    sample_indices: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    n_train: int
    params: dict = field(default_factory=dict)
    skipped: bool = False
    reason: str = ""
    flags: tuple = ()

    def __post_init__(self):
        if not self.skipped:
            if not (len(self.sample_indices) == len(self.mean) == len(self.sd)):
                raise ValueError("prediction arrays disagree on length")
            if np.any(self.sd < 0):
                raise ValueError("sd must be non-negative")


def _skipped(window_id, t_start, t_end, model, reason):
    empty = np.empty(0)
    return WindowPrediction(
        window=window_id,
        t_start=t_start,
        t_end=t_end,
        model=model,
        sample_indices=np.empty(0, dtype=int),
        mean=empty,
        sd=empty,
        n_train=0,
        skipped=True,
        reason=reason,
    )


def _window_queries(subject, window_id, cfg, lagged):
    """Raw (unstandardized) query rows for a window, or None if the lag
    map does not cover every sample of the window."""
    win = cfg.window_samples
    wstart, wend = window_id * win, (window_id + 1) * win
    fm = subject.lagged if lagged else subject.aligned_unlagged()
    lo = wstart - fm.first_sample
    hi = wend - fm.first_sample
    if lo < 0 or hi > fm.n_rows:
        return None, None
    return fm.values[lo:hi], np.arange(wstart, wend)


def predict_window(
    window_id: int,
    subject: PreparedSubject,
    pool: TrainingPool,
    cfg: PipelineConfig,
    model: str | None = None,
) -> WindowPrediction:
    """Fit a GP on the window's nearest-neighbor union and predict it.

    Windows whose pool is smaller than ``cfg.min_pool``, or whose samples
    are not all covered by the lag map, are returned skipped with reason
    "insufficient history".
    """
    model = model or cfg.model_name
    win = cfg.window_samples
    t_start = window_id * win / cfg.fs
    t_end = (window_id + 1) * win / cfg.fs
    raw, samples = _window_queries(subject, window_id, cfg, lagged=True)
    if raw is None or len(pool) < cfg.min_pool:
        return _skipped(window_id, t_start, t_end, model, "insufficient history")

    queries = pool.scaling.apply(raw)
    selected = _knn_union(queries, pool, cfg.k_neighbors)
    fit = fit_mle(
        pool.x[selected], pool.y[selected], family=cfg.family, diffusion=cfg.diffusion
    )
    mean, sd = gp_predict(fit, queries)
    if cfg.coverage_includes_noise:
        sd = np.sqrt(sd**2 + fit.tau2)
    return WindowPrediction(
        window=window_id,
        t_start=t_start,
        t_end=t_end,
        model=model,
        sample_indices=samples,
        mean=mean,
        sd=sd,
        n_train=len(selected),
        params={
            "mu": fit.mu,
            "sigma2": fit.kernel.sigma2,
            "rho": fit.kernel.rho,
            "tau2": fit.tau2,
            "log_lik": fit.log_lik,
        },
        flags=("degenerate",) if fit.degenerate else (),
    )


def loclm_baseline(
    window_id: int,
    subject: PreparedSubject,
    pool: TrainingPool,
    cfg: PipelineConfig,
) -> WindowPrediction:
    """Ordinary least squares on the same neighborhoods, unlagged features.

    The reported sd is the residual standard error of the window's fit,
    constant across its samples.  Rank-deficient designs take the
    minimum-norm solution and are flagged.
    """
    win = cfg.window_samples
    t_start = window_id * win / cfg.fs
    t_end = (window_id + 1) * win / cfg.fs
    raw, samples = _window_queries(subject, window_id, cfg, lagged=False)
    if raw is None or len(pool) < cfg.min_pool:
        return _skipped(window_id, t_start, t_end, "loclm", "insufficient history")

    queries = pool.scaling.apply(raw)
    selected = _knn_union(queries, pool, cfg.k_neighbors)
    x_train, y_train = pool.x[selected], pool.y[selected]
    if len(y_train) < 2:
        raise ValueError("linear baseline needs at least 2 training rows")
    design = np.column_stack([np.ones(len(x_train)), x_train])
    coef, _, rank, _ = np.linalg.lstsq(design, y_train, rcond=None)
    resid = y_train - design @ coef
    dof = max(len(y_train) - design.shape[1], 1)
    rse = float(np.sqrt(resid @ resid / dof))
    mean = np.column_stack([np.ones(len(queries)), queries]) @ coef
    return WindowPrediction(
        window=window_id,
        t_start=t_start,
        t_end=t_end,
        model="loclm",
        sample_indices=samples,
        mean=mean,
        sd=np.full(len(queries), rse),
        n_train=len(y_train),
        params={"intercept": float(coef[0]), "rse": rse, "rank": int(rank)},
        flags=("rank_deficient",) if rank < design.shape[1] else (),
    )


def score_predictions(
    sample_indices,
    mean,
    sd,
    flow_samples,
    cfg: PipelineConfig,
    mode: str | None = None,
    model: str = "locgp",
) -> list:
    """Per-window metrics for a flat prediction series against truth.

    In inter mode the whole series is first shifted to its best global
    cross-correlation lag; each retained pair is then scored in the window
    of its truth-side sample index.  Windows come out in ascending order.
    """
    mode = mode or cfg.mode
    idx = np.asarray(sample_indices, dtype=int)
    mean = as_float_vector(mean, "mean")
    sd = as_float_vector(sd, "sd")
    flow_samples = as_float_vector(flow_samples, "flow_samples")
    if not (len(idx) == len(mean) == len(sd)):
        raise ValueError("prediction arrays disagree on length")
    if len(idx) == 0:
        return []
    truth = flow_samples[idx]

    lag_seconds = 0.0
    if mode == "inter" and cfg.max_lag_seconds > 0:
        lag_seconds, mean, truth = global_align(mean, truth, cfg.fs, cfg.max_lag_seconds)
        lag_n = int(round(lag_seconds * cfg.fs))
        if lag_n >= 0:
            sd = sd[lag_n:]
            idx = idx[: len(truth)]
        else:
            sd = sd[: len(mean)]
            idx = idx[-lag_n:]

    win = cfg.window_samples
    windows = idx // win
    scores = []
    for w in np.unique(windows):
        members = windows == w
        m, s, y = mean[members], sd[members], truth[members]
        try:
            diff_rr = diff_rmse_reduction(
                m, y, cfg.fs, cutoff_hz=cfg.butter_cutoff_hz, order=cfg.butter_order
            )
        except ValueError:  # window fragment too short to filter
            diff_rr = float("nan")
        scores.append(
            WindowScore(
                window=int(w),
                t_start=w * win / cfg.fs,
                t_end=(w + 1) * win / cfg.fs,
                model=model,
                n_samples=int(members.sum()),
                rmse_reduction=rmse_reduction(m, y),
                diff_rmse_reduction=diff_rr,
                coverage_95=coverage_rate(m, s, y),
                lag_seconds=lag_seconds,
            )
        )
    return scores


@dataclass(frozen=True)
class PipelineResult:
    """Predictions, per-window scores, and per-model summaries of one run."""

    mode: str
    predictions: dict  # subject_id -> [WindowPrediction ...]
    scores: dict  # subject_id -> [WindowScore ...]
    summary: dict  # model name -> summarize_windows output

    def model_scores(self, model: str):
        return [
            s for per_subject in self.scores.values() for s in per_subject
            if s.model == model
        ]


def _prepare_all(subjects, cfg):
    prepared = []
    for subject in subjects:
        if isinstance(subject, PreparedSubject):
            prepared.append(subject)
        else:
            prepared.append(prepare_subject(subject, cfg))
    ids = [p.subject_id for p in prepared]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate subject ids")
    return prepared


def _subject_windows(subject, cfg, pool_for, baseline_pool_for):
    """Predict every full window of one subject; returns WindowPredictions."""
    win = cfg.window_samples
    n_windows = subject.n_samples // win

    def one(window_id):
        out = [predict_window(window_id, subject, pool_for(window_id), cfg)]
        if cfg.baseline:
            out.append(
                loclm_baseline(window_id, subject, baseline_pool_for(window_id), cfg)
            )
        return out

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            batches = list(pool.map(one, range(n_windows)))
    else:
        batches = [one(w) for w in range(n_windows)]
    return [p for batch in batches for p in batch]


def _score_subject(subject, predictions, cfg):
    if subject.flow is None:
        return []
    scores = []
    models = sorted({p.model for p in predictions})
    for model in models:
        kept = [p for p in predictions if p.model == model and not p.skipped]
        if not kept:
            continue
        scores += score_predictions(
            np.concatenate([p.sample_indices for p in kept]),
            np.concatenate([p.mean for p in kept]),
            np.concatenate([p.sd for p in kept]),
            subject.flow,
            cfg,
            model=model,
        )
    return scores


def run_pipeline(subjects, cfg: PipelineConfig) -> PipelineResult:
    """Run the full windowed pipeline over one or more subjects.

    ``subjects`` may mix raw :class:`SubjectRecord` and already prepared
    :class:`PreparedSubject` entries.  Intra mode predicts each subject from
    its own past; inter mode fits on ``cfg.train_subjects`` and predicts the
    remaining (or ``cfg.test_subjects``) subjects.  Scores are computed for
    every subject whose flow is available.
    """
    prepared = _prepare_all(subjects, cfg)
    by_id = {p.subject_id: p for p in prepared}

    predictions, scores = {}, {}
    if cfg.mode == "intra":
        for subject in prepared:
            if subject.flow is None:
                raise ValueError(
                    f"intra mode needs recorded flow for {subject.subject_id!r}"
                )
            whole = whole24 = None
            if cfg.standardization == "all":
                whole = ScalingParams.fit(subject.lagged.values)
                if cfg.baseline:
                    whole24 = ScalingParams.fit(subject.aligned_unlagged().values)
            win = cfg.window_samples
            preds = _subject_windows(
                subject,
                cfg,
                lambda w, s=subject: intra_pool(s, w * win, cfg, scaling=whole),
                lambda w, s=subject: intra_pool(
                    s, w * win, cfg, lagged=False, scaling=whole24
                ),
            )
            predictions[subject.subject_id] = preds
            scores[subject.subject_id] = _score_subject(subject, preds, cfg)
    else:
        train_ids = set(cfg.train_subjects)
        if not train_ids:
            raise ValueError("inter mode needs cfg.train_subjects")
        missing = train_ids - set(by_id)
        if missing:
            raise ValueError(f"unknown training subjects: {sorted(missing)}")
        test_ids = list(cfg.test_subjects) or [
            p.subject_id for p in prepared if p.subject_id not in train_ids
        ]
        overlap = train_ids & set(test_ids)
        if overlap:
            raise ValueError(f"subjects in both train and test: {sorted(overlap)}")
        if not test_ids:
            raise ValueError("no test subjects left")
        train = [by_id[i] for i in sorted(train_ids)]
        pool = inter_pool(train, cfg)
        pool24 = inter_pool(train, cfg, lagged=False) if cfg.baseline else None
        for test_id in test_ids:
            subject = by_id[test_id]
            preds = _subject_windows(
                subject, cfg, lambda w: pool, lambda w: pool24
            )
            predictions[test_id] = preds
            scores[test_id] = _score_subject(subject, preds, cfg)

    summary = {}
    all_scores = [s for per_subject in scores.values() for s in per_subject]
    for model in sorted({s.model for s in all_scores}):
        summary[model] = summarize_windows([s for s in all_scores if s.model == model])
    return PipelineResult(cfg.mode, predictions, scores, summary)


class LocalGaussianProcess(BaseEstimator, RegressorMixin):
    """Estimator facade: fit stores the pool, predict runs one
    nearest-neighbor-union GP over the query batch.

    Each predict call refits from scratch on the union of the queries'
    ``k`` nearest training rows, which is the intended usage pattern (one
    call per prediction window).
    """

    def __init__(self, k=3, family="exponential", diffusion=False):
        self.k = k
        self.family = family
        self.diffusion = diffusion

    def fit(self, X, y):
        x = np.asarray(X, dtype=float)
        scaling = ScalingParams.fit(x)
        self.pool_ = _make_pool(
            x, y, [""] * len(x), np.arange(len(x)), "inter", scaling
        )
        return self

    def predict(self, X, return_sd=False):
        if not hasattr(self, "pool_"):
            raise RuntimeError("estimator is not fitted")
        queries = self.pool_.scaling.apply(np.asarray(X, dtype=float))
        selected = _knn_union(queries, self.pool_, self.k)
        fit = fit_mle(
            self.pool_.x[selected],
            self.pool_.y[selected],
            family=self.family,
            diffusion=self.diffusion,
        )
        mean, sd = gp_predict(fit, queries)
        return (mean, sd) if return_sd else mean
