"""Synthetic signals with known ground truth.

Three generators: adaptive-harmonic test signals whose amplitude and phase
trajectories are returned alongside the samples, draws from a specified GP,
and a coupled three-channel "subject" (abdominal and thoracic movement plus
airflow) for end-to-end pipeline checks.  Everything is deterministic given
its seed.
"""

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .gp import KernelSpec, _cholesky_with_jitter, cov_matrix
from .signal import TimeSeries
from .validation import as_float_matrix, check_positive

__all__ = [
    "AnhmSpec",
    "HarmonicTruth",
    "gen_anhm",
    "sample_gp",
    "CoupledSubjectConfig",
    "CoupledSubject",
    "gen_coupled_subject",
]


@dataclass(frozen=True)
class HarmonicTruth:
    """Ground-truth amplitude and phase (in cycles) of one component."""

    harmonic_index: int
    amplitude: np.ndarray
    phase: np.ndarray

    def samples(self):
        return self.amplitude * np.cos(2 * np.pi * self.phase)

    def if_hz(self, fs: float) -> np.ndarray:
        """Instantaneous frequency via centered phase differences."""
        return np.gradient(self.phase, 1.0 / fs)


@dataclass(frozen=True)
class AnhmSpec:
    """Recipe for an adaptive-harmonic signal.

    ``amplitudes[k-1]`` is the k-th harmonic amplitude: a constant or a
    callable of the time array returning positive, slowly varying values.
    ``phase`` maps the time array to the fundamental phase in cycles and
    must be strictly increasing; harmonic k uses k * phase + offset_k.
    ``epsilon`` bounds both the relative phase curvature and the relative
    amplitude slopes checked at generation time.
    """

    amplitudes: Sequence
    phase: Callable[[np.ndarray], np.ndarray]
    phase_offsets: Sequence[float] | None = None
    noise_sd: float = 0.0
    seed: int = 0
    epsilon: float = 0.05


def _as_trajectory(spec_entry, t):
    if callable(spec_entry):
        values = np.asarray(spec_entry(t), dtype=float)
        if values.shape != t.shape:
            raise ValueError("amplitude trajectory must match the time grid")
        return values
    return np.full_like(t, float(spec_entry))


def gen_anhm(spec: AnhmSpec, fs: float, duration: float):
    """Generate sum_k a_k(t) cos(2 pi (k phi(t) + off_k)) + noise.

    Returns (TimeSeries, truths) where ``truths`` holds each component's
    amplitude and phase arrays; summing a_k cos(2 pi phase_k) over the
    truths reproduces the noise-free signal exactly.  Raises if the
    fundamental is not strictly increasing or the slow-variation conditions
    max|phi''| <= eps * min(phi') and max|a_k'| <= eps * min(phi') fail.
    """
    check_positive(fs, "fs")
    check_positive(duration, "duration")
    t = np.arange(0.0, duration, 1.0 / fs)
    if len(t) < 3:
        raise ValueError("duration too short")
    phi = np.asarray(spec.phase(t), dtype=float)
    if phi.shape != t.shape:
        raise ValueError("phase callable must match the time grid")
    phi_rate = np.gradient(phi, 1.0 / fs)
    if np.any(phi_rate <= 0):
        raise ValueError("fundamental phase must be strictly increasing")
    phi_curv = np.gradient(phi_rate, 1.0 / fs)
    floor_rate = phi_rate.min()
    if np.abs(phi_curv).max() > spec.epsilon * floor_rate:
        raise ValueError("phase curvature violates the slow-variation budget")

    offsets = spec.phase_offsets or [0.0] * len(spec.amplitudes)
    if len(offsets) != len(spec.amplitudes):
        raise ValueError("phase_offsets must match amplitudes")

    truths = []
    clean = np.zeros_like(t)
    for k, (amp_spec, off) in enumerate(zip(spec.amplitudes, offsets), start=1):
        amp = _as_trajectory(amp_spec, t)
        if np.any(amp <= 0):
            raise ValueError(f"harmonic {k} amplitude must stay positive")
        amp_slope = np.gradient(amp, 1.0 / fs)
        if np.abs(amp_slope).max() > spec.epsilon * floor_rate:
            raise ValueError(f"harmonic {k} amplitude varies too fast")
        phase_k = k * phi + off
        truths.append(HarmonicTruth(k, amp, phase_k))
        clean = clean + amp * np.cos(2 * np.pi * phase_k)

    samples = clean
    if spec.noise_sd > 0:
        rng = np.random.default_rng(spec.seed)
        samples = clean + spec.noise_sd * rng.standard_normal(len(t))
    return TimeSeries(samples, fs), truths


def sample_gp(
    x: np.ndarray,
    kernel: KernelSpec,
    mu: float = 0.0,
    tau2: float = 0.0,
    seed: int = 0,
) -> np.ndarray:
    """One draw from N(mu 1, Sigma(kernel) + tau2 I) at inputs ``x``."""
    x = as_float_matrix(x, "x")
    if tau2 < 0:
        raise ValueError("tau2 must be >= 0")
    sigma = cov_matrix(x, kernel) + tau2 * np.eye(len(x))
    chol = _cholesky_with_jitter(sigma, kernel.sigma2)
    z = np.random.default_rng(seed).standard_normal(len(x))
    return mu + chol @ z


# ---------------------------------------------------------------------------
# coupled subject


@dataclass(frozen=True)
class CoupledSubjectConfig:
    """Shape of the simulated subject.

    The two movement channels are harmonic stacks over one shared
    fundamental phase with channel-specific amplitude envelopes and
    harmonic phase offsets (fundamental offset zero on both, so their
    fundamentals cross zero together).  Airflow is the deterministic
    functional

        flow(t) = flow_gain * tanh( coupling_beta * m(t) * cos(2 pi phi(t)) )

    with m(t) a fixed positive combination of the channels' harmonic
    amplitude envelopes (weights ``mix_abd`` / ``mix_tho``); tanh is odd, so
    flow crosses zero exactly where the shared fundamental does while its
    wave shape stays non-sinusoidal and amplitude dependent.
    """

    duration: float = 1200.0
    fs: float = 50.0
    base_freq: float = 0.28
    freq_wobble: tuple = ((0.035, 300.0), (0.02, 73.0))
    abd_amp: tuple = (1.0, 0.45, 0.2, 0.1)
    tho_amp: tuple = (0.9, 0.25, 0.3, 0.08)
    abd_depth: tuple = (0.2, 0.15, 0.1, 0.1)
    tho_depth: tuple = (0.25, 0.15, 0.12, 0.1)
    abd_period: tuple = (200.0, 150.0, 170.0, 130.0)
    tho_period: tuple = (180.0, 160.0, 140.0, 120.0)
    abd_offsets: tuple = (0.0, 0.12, 0.35, 0.5)
    tho_offsets: tuple = (0.0, 0.4, 0.1, 0.8)
    mix_abd: tuple = (0.45, 0.3, 0.0, 0.0)
    mix_tho: tuple = (0.35, 0.0, 0.25, 0.0)
    coupling_beta: float = 1.4
    flow_gain: float = 1.0
    noise_sd_channels: float = 0.0
    noise_sd_flow: float = 0.0


@dataclass(frozen=True)
class CoupledSubject:
    flow: TimeSeries
    abd: TimeSeries
    tho: TimeSeries
    fundamental_phase: np.ndarray  # cycles, at the generator rate
    abd_truth: list
    tho_truth: list


def gen_coupled_subject(
    seed: int, config: CoupledSubjectConfig | None = None
) -> CoupledSubject:
    """Simulate one subject's (flow, abd, tho) with shared breathing phase."""
    cfg = config or CoupledSubjectConfig()
    rng = np.random.default_rng(seed)
    t = np.arange(0.0, cfg.duration, 1.0 / cfg.fs)

    phases = rng.uniform(0.0, 2 * np.pi, size=2 + 2 * len(cfg.abd_amp) + 2 * len(cfg.tho_amp))
    inst_freq = np.full_like(t, cfg.base_freq)
    for (depth, period), ph in zip(cfg.freq_wobble, phases[:2]):
        inst_freq = inst_freq + depth * np.sin(2 * np.pi * t / period + ph)
    if np.any(inst_freq <= 0):
        raise ValueError("instantaneous frequency must stay positive")
    phi = np.cumsum(inst_freq) / cfg.fs

    def build_channel(amps, depths, periods, offsets, phase_block):
        truths, signal = [], np.zeros_like(t)
        for k, (a0, dep, per, off, ph) in enumerate(
            zip(amps, depths, periods, offsets, phase_block), start=1
        ):
            amp = a0 * (1.0 + dep * np.sin(2 * np.pi * t / per + ph))
            phase_k = k * phi + off
            truths.append(HarmonicTruth(k, amp, phase_k))
            signal = signal + amp * np.cos(2 * np.pi * phase_k)
        return truths, signal

    n_abd = len(cfg.abd_amp)
    abd_truth, abd = build_channel(
        cfg.abd_amp, cfg.abd_depth, cfg.abd_period, cfg.abd_offsets,
        phases[2 : 2 + n_abd],
    )
    tho_truth, tho = build_channel(
        cfg.tho_amp, cfg.tho_depth, cfg.tho_period, cfg.tho_offsets,
        phases[2 + n_abd : 2 + n_abd + len(cfg.tho_amp)],
    )

    envelope = np.zeros_like(t)
    for w, truth in zip(cfg.mix_abd, abd_truth):
        envelope = envelope + w * truth.amplitude
    for w, truth in zip(cfg.mix_tho, tho_truth):
        envelope = envelope + w * truth.amplitude
    flow = cfg.flow_gain * np.tanh(cfg.coupling_beta * envelope * np.cos(2 * np.pi * phi))

    if cfg.noise_sd_channels > 0:
        abd = abd + cfg.noise_sd_channels * rng.standard_normal(len(t))
        tho = tho + cfg.noise_sd_channels * rng.standard_normal(len(t))
    if cfg.noise_sd_flow > 0:
        flow = flow + cfg.noise_sd_flow * rng.standard_normal(len(t))

    return CoupledSubject(
        flow=TimeSeries(flow, cfg.fs),
        abd=TimeSeries(abd, cfg.fs),
        tho=TimeSeries(tho, cfg.fs),
        fundamental_phase=phi,
        abd_truth=abd_truth,
        tho_truth=tho_truth,
    )
