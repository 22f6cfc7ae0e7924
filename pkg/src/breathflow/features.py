"""Harmonic feature matrices: assembly, lag embedding, standardization.

Each time sample gets, per harmonic k, the six numbers
[amp_abd_k, amp_tho_k, cos_abd_k, cos_tho_k, sin_abd_k, sin_tho_k].
A short lag map then stacks consecutive rows so the regression sees a
window of recent dynamics, and standardization puts all columns on a
common scale before nearest-neighbor search.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .ridge import HarmonicComponent
from .validation import as_float_matrix

__all__ = [
    "FeatureMatrix",
    "ScalingParams",
    "harmonic_features",
    "lag_embed",
    "standardize",
    "FeatureScaler",
    "write_features_csv",
    "read_features_csv",
]

CONSTANT_SD = 1e-12  # below this a column is treated as constant


@dataclass(frozen=True)
class FeatureMatrix:
    """Feature rows plus naming and provenance.

    ``first_sample`` is the signal sample index of row 0, so row i describes
    sample ``first_sample + i``.  ``stage`` tracks what has been applied.
    """

    values: np.ndarray
    column_names: tuple
    stage: str  # "raw" | "lagged" | "standardized"
    first_sample: int = 0

    def __post_init__(self):
        v = as_float_matrix(self.values, "feature values")
        if v.shape[1] != len(self.column_names):
            raise ValueError("column_names must match the number of columns")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "column_names", tuple(self.column_names))

    @property
    def n_rows(self):
        return self.values.shape[0]

    @property
    def n_columns(self):
        return self.values.shape[1]


def harmonic_features(
    abd: list[HarmonicComponent], tho: list[HarmonicComponent]
) -> FeatureMatrix:
    """Interleave two channels' harmonic descriptors into one matrix."""
    if len(abd) != len(tho):
        raise ValueError("channels must have the same number of harmonics")
    if not abd:
        raise ValueError("need at least one harmonic per channel")
    n = len(abd[0].amplitude)
    columns, names = [], []
    for a, t in zip(abd, tho):
        if len(a.amplitude) != n or len(t.amplitude) != n:
            raise ValueError("all components must cover the same frames")
        k = a.harmonic_index
        columns += [a.amplitude, t.amplitude, a.phase_cos, t.phase_cos, a.phase_sin, t.phase_sin]
        names += [
            f"abd_h{k}_amp", f"tho_h{k}_amp",
            f"abd_h{k}_cos", f"tho_h{k}_cos",
            f"abd_h{k}_sin", f"tho_h{k}_sin",
        ]
    return FeatureMatrix(np.column_stack(columns), tuple(names), "raw")


def lag_embed(fm: FeatureMatrix, width: int = 10) -> FeatureMatrix:
    """Concatenate each row with its ``width - 1`` predecessors.

    Row i of the output covers input rows i .. i+width-1 ordered oldest
    first, so the output has width times the columns and width-1 fewer
    rows.  Column names carry the lag: ``_lag9`` is the oldest block,
    ``_lag0`` the current sample.
    """
    if width < 1:
        raise ValueError("width must be >= 1")
    if fm.n_rows < width:
        raise ValueError(f"need at least {width} rows for lag embedding")
    n_out = fm.n_rows - width + 1
    blocks = [fm.values[i : i + n_out] for i in range(width)]
    names = []
    for i in range(width):
        lag = width - 1 - i
        names += [f"{c}_lag{lag}" for c in fm.column_names]
    return FeatureMatrix(
        np.column_stack(blocks),
        tuple(names),
        "lagged",
        first_sample=fm.first_sample + width - 1,
    )


@dataclass(frozen=True)
class ScalingParams:
    """Per-column center and scale, with constant columns flagged."""

    mean: np.ndarray
    sd: np.ndarray
    constant: np.ndarray  # bool per column: sd below CONSTANT_SD

    @classmethod
    def fit(cls, values: np.ndarray) -> "ScalingParams":
        values = as_float_matrix(values, "values")
        mean = values.mean(axis=0)
        sd = values.std(axis=0)  # population convention (divide by n)
        constant = sd < CONSTANT_SD
        return cls(mean, sd, constant)

    def apply(self, values: np.ndarray) -> np.ndarray:
        scale = np.where(self.constant, 1.0, self.sd)
        return (values - self.mean) / scale


def standardize(
    fm: FeatureMatrix, params: ScalingParams | None = None
) -> tuple[FeatureMatrix, ScalingParams]:
    """Center and scale columns to zero mean, unit population variance.

    With ``params`` given the stored statistics are applied unchanged
    (train-fit, test-apply).  Constant columns are centered but left
    unscaled and flagged in the returned params.
    """
    if params is None:
        params = ScalingParams.fit(fm.values)
    elif len(params.mean) != fm.n_columns:
        raise ValueError("params were fitted on a different column count")
    out = FeatureMatrix(
        params.apply(fm.values), fm.column_names, "standardized", fm.first_sample
    )
    return out, params


class FeatureScaler(BaseEstimator, TransformerMixin):
    """Estimator-style wrapper around :class:`ScalingParams`.

    fit(X) learns per-column mean and population sd; transform(X) applies
    them, leaving constant columns centered but unscaled.
    """

    def fit(self, X, y=None):
        self.params_ = ScalingParams.fit(np.asarray(X, dtype=float))
        return self

    def transform(self, X):
        if not hasattr(self, "params_"):
            raise RuntimeError("FeatureScaler must be fitted before transform")
        return self.params_.apply(np.asarray(X, dtype=float))


def write_features_csv(path, fm: FeatureMatrix, times: np.ndarray) -> None:
    """Export a feature matrix with its documented column-name header."""
    if len(times) != fm.n_rows:
        raise ValueError("times length must match feature rows")
    header = ",".join(("t",) + fm.column_names)
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for t, row in zip(times, fm.values):
            fh.write(",".join(repr(float(v)) for v in (t, *row)) + "\n")


def read_features_csv(path):
    """Inverse of :func:`write_features_csv`: (FeatureMatrix, times)."""
    with open(path, newline="") as fh:
        header = fh.readline().rstrip("\n").split(",")
        if not header or header[0] != "t":
            raise ValueError(f"{path}: expected a leading 't' column")
        data = [[float(c) for c in line.rstrip("\n").split(",")] for line in fh]
    arr = np.asarray(data, dtype=float).reshape(len(data), len(header))
    fm = FeatureMatrix(arr[:, 1:], tuple(header[1:]), "raw")
    return fm, arr[:, 0]
