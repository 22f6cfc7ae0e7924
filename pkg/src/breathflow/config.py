"""Pipeline configuration: defaults, JSON round trip, env overrides."""

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass

from .gp import FAMILIES
from .ridge import DecompositionConfig
from .tfr import FrequencyGrid, WindowSpec

__all__ = [
    "PipelineConfig",
    "config_to_dict",
    "config_from_dict",
    "load_config",
    "save_config",
    "config_hash",
    "apply_env_overrides",
    "decomposition_config",
    "ENV_PREFIX",
]

ENV_PREFIX = "BT_"

STANDARDIZATION_MODES = ("separate", "all")
PIPELINE_MODES = ("intra", "inter")


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a pipeline run depends on, in one hashable record.

    Defaults are the operating point the whole test suite is calibrated
    against: 10 Hz processing rate, 30 s windows, K = 3 neighbors, an
    exponential covariance, ridge smoothness 0.3, and 0.05 Hz
    reconstruction bandwidth.
    """

    fs: float = 10.0
    data_fs: float | None = None  # expected input rate; None accepts any
    window_seconds: float = 30.0
    k_neighbors: int = 3
    family: str = "exponential"
    diffusion: bool = False
    baseline: bool = False  # also fit the linear baseline on each window
    smoothness: float = 0.3
    bandwidth: float = 0.05
    n_harmonics: int = 4
    lag_width: int = 10
    standardization: str = "separate"
    fundamental_band: tuple = (0.1, 0.5)
    f_min: float = 0.0
    f_max: float = 2.0
    df: float = 1e-3
    window_scale: float = 32.0
    sst_threshold: float | None = None
    detrend_span_seconds: float = 30.0
    butter_cutoff_hz: float = 1.0
    butter_order: int = 6
    min_pool: int = 50
    max_lag_seconds: float = 1.5
    coverage_includes_noise: bool = False
    mode: str = "intra"
    train_subjects: tuple = ()
    test_subjects: tuple = ()
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "fundamental_band", tuple(self.fundamental_band))
        object.__setattr__(self, "train_subjects", tuple(self.train_subjects))
        object.__setattr__(self, "test_subjects", tuple(self.test_subjects))
        if self.standardization not in STANDARDIZATION_MODES:
            raise ValueError(f"standardization must be one of {STANDARDIZATION_MODES}")
        if self.mode not in PIPELINE_MODES:
            raise ValueError(f"mode must be one of {PIPELINE_MODES}")
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        for name in ("fs", "window_seconds", "smoothness", "bandwidth", "df",
                     "window_scale", "detrend_span_seconds", "butter_cutoff_hz"):
            if getattr(self, name) <= 0 and name != "smoothness":
                raise ValueError(f"{name} must be positive")
        if self.smoothness < 0:
            raise ValueError("smoothness must be >= 0")
        for name in ("k_neighbors", "n_harmonics", "lag_width", "min_pool",
                     "butter_order", "jobs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0 < self.fundamental_band[0] < self.fundamental_band[1]:
            raise ValueError("fundamental_band must be an increasing positive pair")
        if self.max_lag_seconds < 0:
            raise ValueError("max_lag_seconds must be >= 0")
        if self.data_fs is not None and self.data_fs <= 0:
            raise ValueError("data_fs must be positive when set")

    @property
    def window_samples(self) -> int:
        return int(round(self.window_seconds * self.fs))

    @property
    def model_name(self) -> str:
        return "locdbgp" if self.diffusion else "locgp"


def decomposition_config(cfg: PipelineConfig) -> DecompositionConfig:
    """Translate pipeline settings into the per-channel decomposition knobs."""
    return DecompositionConfig(
        window=WindowSpec(scale=cfg.window_scale),
        grid=FrequencyGrid(cfg.f_min, cfg.f_max, cfg.df),
        n_harmonics=cfg.n_harmonics,
        fundamental_band=cfg.fundamental_band,
        smoothness=cfg.smoothness,
        bandwidth=cfg.bandwidth,
        sst_threshold=cfg.sst_threshold,
    )


def config_to_dict(cfg: PipelineConfig) -> dict:
    out = dataclasses.asdict(cfg)
    for key in ("fundamental_band", "train_subjects", "test_subjects"):
        out[key] = list(out[key])
    return out


def config_from_dict(data: dict) -> PipelineConfig:
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config fields: {sorted(unknown)}")
    return PipelineConfig(**data)


def save_config(cfg: PipelineConfig, path) -> None:
    with open(path, "w", newline="") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_config(path) -> PipelineConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))


def config_hash(cfg: PipelineConfig) -> str:
    """sha256 over the canonical JSON encoding."""
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _parse_env_value(raw: str, field: dataclasses.Field):
    name = field.name
    if name in ("train_subjects", "test_subjects"):
        return tuple(s for s in raw.split(",") if s)
    if name == "fundamental_band":
        return tuple(float(s) for s in raw.split(","))
    if name in ("sst_threshold", "data_fs"):
        return None if raw == "" else float(raw)
    kind = field.type if isinstance(field.type, str) else getattr(field.type, "__name__", "")
    if kind == "bool":
        lowered = raw.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"cannot parse boolean from {raw!r}")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw


def apply_env_overrides(cfg: PipelineConfig, env=None) -> PipelineConfig:
    """Overlay BT_<FIELD> environment variables onto a config.

    e.g. BT_SEED=7, BT_MODE=inter, BT_TRAIN_SUBJECTS=a,b, BT_DIFFUSION=true.
    """
    env = os.environ if env is None else env
    updates = {}
    for field in dataclasses.fields(PipelineConfig):
        key = ENV_PREFIX + field.name.upper()
        if key in env:
            updates[field.name] = _parse_env_value(env[key], field)
    return dataclasses.replace(cfg, **updates) if updates else cfg
