"""Uniformly sampled time series and the preprocessing steps applied to them.

Respiratory recordings arrive at whatever rate the hardware used.  Everything
downstream works at a common rate on detrended signals, so this module holds
the carrier type plus the four preprocessing primitives: rate conversion,
local-quadratic detrending, zero-phase low-pass filtering, and numerical
differentiation.  All operations are pure functions returning new objects.
"""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.signal import butter, resample_poly, sosfiltfilt

from .validation import as_float_vector, check_positive

__all__ = [
    "TimeSeries",
    "resample",
    "detrend_local_quadratic",
    "butterworth_lowpass",
    "differentiate",
]


@dataclass(frozen=True)
class TimeSeries:
    """A uniformly sampled signal: values, rate, and start time."""

    samples: np.ndarray
    fs: float
    t0: float = 0.0

    def __post_init__(self):
        samples = as_float_vector(self.samples, "samples")
        if samples.flags.writeable:
            # private copy so freezing cannot reach back into caller arrays
            samples = samples.copy()
            samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        check_positive(self.fs, "fs")

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.fs

    @property
    def times(self) -> np.ndarray:
        """Time of sample ℓ is t0 + ℓ/fs."""
        return self.t0 + np.arange(len(self.samples)) / self.fs

    def with_samples(self, samples) -> "TimeSeries":
        return TimeSeries(samples, self.fs, self.t0)


def resample(ts: TimeSeries, target_fs: float) -> TimeSeries:
    """Convert ``ts`` to ``target_fs`` using polyphase anti-alias filtering.

    The rate ratio is approximated by a rational number; edge samples are
    reflection-padded so the filter transient does not bend the boundaries.
    Downsampling applies the anti-alias low-pass before decimation;
    upsampling goes through the same interpolation filter.
    """
    check_positive(target_fs, "target_fs")
    x = ts.samples
    frac = Fraction(target_fs / ts.fs).limit_denominator(1000)
    up, down = frac.numerator, frac.denominator
    if up == down:
        return TimeSeries(x.copy(), target_fs, ts.t0)
    # reflection pad beyond the polyphase filter transient; pad length is a
    # multiple of `down` so the padded output offset is an integer
    half_len = 10 * max(up, down)
    pad = int(np.ceil((np.ceil(half_len / up) + 1) / down)) * down
    pad = min(pad, len(x) - 1)
    if pad > 0:
        xp = np.concatenate([x[1 : pad + 1][::-1], x, x[-pad - 1 : -1][::-1]])
    else:
        xp = x
    y = resample_poly(xp, up, down)
    offset = pad * up // down
    n_out = int(np.ceil(len(x) * up / down))
    return TimeSeries(y[offset : offset + n_out], target_fs, ts.t0)


def _tricube(u):
    return np.clip(1.0 - np.abs(u) ** 3, 0.0, None) ** 3


def detrend_local_quadratic(ts: TimeSeries, span_seconds: float = 30.0) -> TimeSeries:
    """Subtract a locally weighted degree-2 polynomial trend.

    At every sample a quadratic is fitted by weighted least squares over the
    centered span (tricube weights, truncated at the record edges) and its
    value at the sample is taken as the trend.  Interior samples share one
    equivalent kernel, so the bulk of the work is a single convolution; edge
    samples get individual truncated fits.
    """
    check_positive(span_seconds, "span_seconds")
    x = ts.samples
    n = len(x)
    if span_seconds * ts.fs < 7:
        raise ValueError(
            f"span of {span_seconds} s at {ts.fs} Hz gives fewer than 7 samples"
        )
    m = int(round(span_seconds * ts.fs / 2))
    half = span_seconds / 2
    offsets = np.arange(-m, m + 1) / ts.fs
    w = _tricube(offsets / half)
    design = np.vstack([np.ones_like(offsets), offsets, offsets**2]).T

    if n > 2 * m:
        kernel = np.linalg.solve(design.T @ (w[:, None] * design), design.T * w)[0]
        trend = np.convolve(x, kernel[::-1], mode="same")
        edge_idx = list(range(m)) + list(range(n - m, n))
    else:
        trend = np.empty(n)
        edge_idx = range(n)

    for i in edge_idx:
        lo, hi = max(0, i - m), min(n, i + m + 1)
        dt = (np.arange(lo, hi) - i) / ts.fs
        ww = _tricube(dt / half)
        a = np.vstack([np.ones_like(dt), dt, dt**2]).T
        gram = a.T @ (ww[:, None] * a)
        try:
            beta = np.linalg.solve(gram, a.T @ (ww * x[lo:hi]))
        except np.linalg.LinAlgError:
            # degenerate window (all weight on too few points): fall back to
            # the weighted mean, which is the trend for locally constant data
            beta = [np.average(x[lo:hi], weights=ww)]
        trend[i] = beta[0]
    return ts.with_samples(x - trend)


def butterworth_lowpass(ts: TimeSeries, cutoff_hz: float, order: int = 6) -> TimeSeries:
    """Zero-phase Butterworth low-pass (forward-backward application).

    The single-pass magnitude response is 1/sqrt(2) at the cutoff, so the
    two-pass gain there is 1/2.  Forward-backward filtering cancels group
    delay, keeping derivatives time-aligned with the input.
    """
    check_positive(cutoff_hz, "cutoff_hz")
    if order < 1:
        raise ValueError("order must be >= 1")
    if cutoff_hz >= ts.fs / 2:
        raise ValueError(f"cutoff {cutoff_hz} Hz is at or above Nyquist {ts.fs / 2} Hz")
    sos = butter(order, cutoff_hz, btype="low", fs=ts.fs, output="sos")
    return ts.with_samples(sosfiltfilt(sos, ts.samples))


def differentiate(ts: TimeSeries) -> TimeSeries:
    """Central differences scaled by fs (one-sided at the boundaries)."""
    if len(ts) < 2:
        raise ValueError("need at least 2 samples to differentiate")
    return ts.with_samples(np.gradient(ts.samples, 1.0 / ts.fs))
