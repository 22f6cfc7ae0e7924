"""Airflow reconstruction from thoracic and abdominal movement signals.

The pipeline decomposes the two movement channels into slowly modulated
harmonics with a synchrosqueezed time-frequency transform, turns them into
lagged feature vectors, and predicts the airflow sample by sample with
locally fitted Gaussian process regressions.
"""

__version__ = "0.1.0"

from .config import PipelineConfig, config_hash, load_config, save_config
from .features import (
    FeatureMatrix,
    FeatureScaler,
    ScalingParams,
    harmonic_features,
    lag_embed,
    read_features_csv,
    standardize,
    write_features_csv,
)
from .gp import (
    GpFit,
    KernelSpec,
    MaternGaussianProcess,
    NotPositiveDefinite,
    cov_matrix,
    diffusion_normalize,
    exact_fit,
    fit_mle,
    log_likelihood,
    matern_cov,
    predict,
)
from .locgp import (
    LocalGaussianProcess,
    PipelineResult,
    PreparedSubject,
    SubjectRecord,
    TrainingPool,
    WindowPrediction,
    build_training_set,
    inter_pool,
    intra_pool,
    knn_search,
    loclm_baseline,
    predict_window,
    prepare_subject,
    run_pipeline,
)
from .metrics import (
    WindowScore,
    coverage_rate,
    diff_rmse_reduction,
    global_align,
    lower_median,
    rmse_reduction,
    summarize_windows,
)
from .ridge import (
    DecompositionConfig,
    HarmonicComponent,
    RidgeCurve,
    extract_ridge,
    harmonic_decompose,
    reconstruct_component,
)
from .signal import (
    TimeSeries,
    butterworth_lowpass,
    detrend_local_quadratic,
    differentiate,
    resample,
)
from .synth import (
    AnhmSpec,
    CoupledSubjectConfig,
    gen_anhm,
    gen_coupled_subject,
    sample_gp,
)
from .tfr import (
    FrequencyGrid,
    TimeFrequencyRepresentation,
    WindowSpec,
    read_tfr,
    reassignment_map,
    sst,
    stft,
    write_tfr,
)

__all__ = [
    "__version__",
    "PipelineConfig", "config_hash", "load_config", "save_config",
    "FeatureMatrix", "FeatureScaler", "ScalingParams",
    "harmonic_features", "lag_embed", "standardize",
    "read_features_csv", "write_features_csv",
    "GpFit", "KernelSpec", "MaternGaussianProcess", "NotPositiveDefinite",
    "cov_matrix", "diffusion_normalize", "exact_fit", "fit_mle", "log_likelihood",
    "matern_cov", "predict",
    "LocalGaussianProcess", "PipelineResult", "PreparedSubject",
    "SubjectRecord", "TrainingPool", "WindowPrediction",
    "build_training_set", "inter_pool", "intra_pool", "knn_search",
    "loclm_baseline", "predict_window", "prepare_subject", "run_pipeline",
    "WindowScore", "coverage_rate", "diff_rmse_reduction", "global_align",
    "lower_median", "rmse_reduction", "summarize_windows",
    "DecompositionConfig", "HarmonicComponent", "RidgeCurve",
    "extract_ridge", "harmonic_decompose", "reconstruct_component",
    "TimeSeries", "butterworth_lowpass", "detrend_local_quadratic",
    "differentiate", "resample",
    "AnhmSpec", "CoupledSubjectConfig", "gen_anhm", "gen_coupled_subject",
    "sample_gp",
    "FrequencyGrid", "TimeFrequencyRepresentation", "WindowSpec",
    "read_tfr", "reassignment_map", "sst", "stft", "write_tfr",
]
