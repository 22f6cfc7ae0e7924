"""Prediction quality metrics for reconstructed airflow."""

from dataclasses import dataclass

import numpy as np

from .signal import TimeSeries, butterworth_lowpass, differentiate
from .validation import as_float_vector, check_consistent_length

__all__ = [
    "Z_95",
    "rmse_reduction",
    "diff_rmse_reduction",
    "coverage_rate",
    "lower_median",
    "global_align",
    "WindowScore",
    "summarize_windows",
]

# two-sided 95% normal quantile, frozen so coverage results are exactly
# reproducible across scipy versions
Z_95 = 1.959963984540054


def rmse_reduction(predicted, actual) -> float:
    """1 - ||predicted - actual|| / ||actual||.

    Equals 1 for a perfect fit and 0 for predicting all zeros; can go
    negative when the prediction is worse than the zero baseline.  A
    zero-energy ``actual`` leaves the index undefined and yields NaN.
    """
    predicted = as_float_vector(predicted, "predicted")
    actual = as_float_vector(actual, "actual")
    check_consistent_length(predicted=predicted, actual=actual)
    denom = np.linalg.norm(actual)
    if denom == 0:
        return float("nan")
    return 1.0 - np.linalg.norm(predicted - actual) / denom


def diff_rmse_reduction(
    predicted,
    actual,
    fs: float,
    cutoff_hz: float = 1.0,
    order: int = 6,
) -> float:
    """rmse_reduction on low-passed derivatives of both signals.

    Differentiation amplifies high-frequency error, so both derivative
    series go through the same zero-phase Butterworth low-pass before
    comparison.  Set ``cutoff_hz`` to None to skip the filter.
    """
    predicted = as_float_vector(predicted, "predicted")
    actual = as_float_vector(actual, "actual")
    check_consistent_length(predicted=predicted, actual=actual)

    def deriv(x):
        ts = differentiate(TimeSeries(x, fs))
        if cutoff_hz is not None:
            ts = butterworth_lowpass(ts, cutoff_hz, order=order)
        return ts.samples

    return rmse_reduction(deriv(predicted), deriv(actual))


def coverage_rate(predicted, sd, actual, level: float = 0.95) -> float:
    """Fraction of actuals inside predicted +- z * sd, z the two-sided
    normal quantile for ``level`` (frozen constant at the default)."""
    predicted = as_float_vector(predicted, "predicted")
    sd = as_float_vector(sd, "sd")
    actual = as_float_vector(actual, "actual")
    check_consistent_length(predicted=predicted, sd=sd, actual=actual)
    if np.any(sd < 0):
        raise ValueError("sd must be non-negative")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    if level == 0.95:
        z = Z_95
    else:
        from scipy.stats import norm

        z = float(norm.ppf(0.5 + level / 2.0))
    inside = np.abs(actual - predicted) <= z * sd
    return float(np.mean(inside))


def lower_median(values) -> float:
    """Element at sorted position (n - 1) // 2; an actual data point.

    For odd n this is the ordinary median; for even n it is the lower of
    the two central order statistics rather than their mean.
    """
    values = as_float_vector(values, "values")
    return float(np.sort(values)[(len(values) - 1) // 2])


def global_align(predicted, actual, fs: float, max_lag_seconds: float = 1.5):
    """Shift ``predicted`` to its best cross-correlation lag against ``actual``.

    Searches integer lags in [-max_lag, +max_lag] samples, picks the one
    maximizing the dot product of the overlapping segments (ties go to the
    smallest lag index, i.e. the most negative), and returns
    ``(lag_seconds, predicted_trimmed, actual_trimmed)`` where the two
    trimmed arrays cover only the overlap.  Positive lag means the
    prediction lags the actual and is shifted earlier to compensate.
    """
    predicted = as_float_vector(predicted, "predicted")
    actual = as_float_vector(actual, "actual")
    check_consistent_length(predicted=predicted, actual=actual)
    n = len(predicted)
    if max_lag_seconds < 0:
        raise ValueError("max_lag_seconds must be >= 0")
    max_lag = int(round(max_lag_seconds * fs))
    if n < 2 * max_lag:
        raise ValueError("series shorter than twice the alignment search range")
    lags = np.arange(-max_lag, max_lag + 1)
    scores = np.empty(len(lags))
    for i, lag in enumerate(lags):
        if lag >= 0:
            a, b = predicted[lag:], actual[: n - lag]
        else:
            a, b = predicted[: n + lag], actual[-lag:]
        scores[i] = np.dot(a, b)
    best = int(lags[np.argmax(scores)])
    if best >= 0:
        pred_trim, act_trim = predicted[best:], actual[: n - best]
    else:
        pred_trim, act_trim = predicted[: n + best], actual[-best:]
    return best / fs, pred_trim, act_trim


@dataclass(frozen=True)
class WindowScore:
    """Metrics for one prediction window."""

    window: int
    t_start: float
    t_end: float
    model: str
    n_samples: int
    rmse_reduction: float
    diff_rmse_reduction: float
    coverage_95: float
    lag_seconds: float = 0.0


def summarize_windows(scores) -> dict:
    """Median-level summary over a list of WindowScore.

    Undefined (NaN) per-window indices are dropped from the medians.
    """
    scores = list(scores)
    if not scores:
        raise ValueError("no window scores to summarize")

    def med(values):
        kept = [v for v in values if not np.isnan(v)]
        return lower_median(kept) if kept else float("nan")

    return {
        "n_windows": len(scores),
        "median_rmse_reduction": med([s.rmse_reduction for s in scores]),
        "median_diff_rmse_reduction": med([s.diff_rmse_reduction for s in scores]),
        "mean_coverage_95": float(np.mean([s.coverage_95 for s in scores])),
        "mean_lag_seconds": float(np.mean([s.lag_seconds for s in scores])),
    }
