"""Tests for the synthetic signal generators and the GP sampler."""

import numpy as np
import pytest

from breathflow import (
    AnhmSpec,
    CoupledSubjectConfig,
    DecompositionConfig,
    KernelSpec,
    cov_matrix,
    gen_anhm,
    gen_coupled_subject,
    harmonic_decompose,
    sample_gp,
)


class TestGenAnhm:
    def test_single_cosine_exact(self):
        spec = AnhmSpec(amplitudes=(1.0,), phase=lambda t: 0.3 * t)
        ts, truths = gen_anhm(spec, fs=10.0, duration=30.0)
        t = np.arange(300) / 10.0
        np.testing.assert_allclose(ts.samples, np.cos(2 * np.pi * 0.3 * t), atol=1e-12)
        assert len(truths) == 1
        np.testing.assert_allclose(truths[0].phase, 0.3 * t)

    def test_truth_components_sum_to_signal(self):
        spec = AnhmSpec(
            amplitudes=(lambda t: 1.0 + 0.001 * t, 0.4, 0.2),
            phase=lambda t: 0.25 * t + 0.03 * np.sin(2 * np.pi * t / 80.0),
            phase_offsets=(0.0, 0.1, 0.3),
        )
        ts, truths = gen_anhm(spec, fs=10.0, duration=120.0)
        rebuilt = sum(tr.samples() for tr in truths)
        np.testing.assert_allclose(ts.samples, rebuilt, atol=1e-12)

    def test_noise_is_seeded(self):
        spec = AnhmSpec(amplitudes=(1.0,), phase=lambda t: 0.3 * t, noise_sd=0.1, seed=4)
        a, _ = gen_anhm(spec, fs=10.0, duration=30.0)
        b, _ = gen_anhm(spec, fs=10.0, duration=30.0)
        np.testing.assert_array_equal(a.samples, b.samples)
        other, _ = gen_anhm(
            AnhmSpec(amplitudes=(1.0,), phase=lambda t: 0.3 * t, noise_sd=0.1, seed=5),
            fs=10.0,
            duration=30.0,
        )
        assert not np.array_equal(a.samples, other.samples)

    def test_breathing_like_spec_is_recoverable(self):
        duration = 240.0
        envelope = lambda t: 1.0 + 0.2 * np.sin(2 * np.pi * 0.005 * t)
        spec = AnhmSpec(
            amplitudes=(
                lambda t: 1.0 * envelope(t),
                lambda t: 0.5 * envelope(t),
                lambda t: 0.25 * envelope(t),
                lambda t: 0.12 * envelope(t),
            ),
            # instantaneous frequency drifts 0.2 -> 0.35 Hz
            phase=lambda t: 0.2 * t + 0.075 * t**2 / duration,
        )
        ts, truths = gen_anhm(spec, fs=10.0, duration=duration)
        comps = harmonic_decompose(ts, DecompositionConfig())
        t = np.arange(len(ts)) / 10.0
        margin = 24.0
        mask = (t >= margin) & (t <= duration - margin)
        err = comps[0].amplitude[mask] - truths[0].amplitude[mask]
        rms_ratio = np.sqrt(np.mean(err**2)) / np.sqrt(
            np.mean(truths[0].amplitude[mask] ** 2)
        )
        assert rms_ratio < 0.10

    def test_decreasing_phase_errors(self):
        spec = AnhmSpec(amplitudes=(1.0,), phase=lambda t: np.sin(t))
        with pytest.raises(ValueError):
            gen_anhm(spec, fs=10.0, duration=30.0)

    def test_fast_amplitude_errors(self):
        spec = AnhmSpec(
            amplitudes=(lambda t: 1.0 + 0.9 * np.sin(2 * np.pi * 0.2 * t),),
            phase=lambda t: 0.2 * t,
        )
        with pytest.raises(ValueError):
            gen_anhm(spec, fs=10.0, duration=30.0)


class TestSampleGp:
    def test_vanishing_variance_returns_mean(self):
        x = np.linspace(0, 5, 20).reshape(-1, 1)
        kernel = KernelSpec("exponential", sigma2=1e-12, rho=1.0)
        y = sample_gp(x, kernel, mu=2.5, tau2=0.0, seed=0)
        np.testing.assert_allclose(y, 2.5, atol=1e-4)

    def test_same_seed_identical(self):
        x = np.linspace(0, 5, 10).reshape(-1, 1)
        kernel = KernelSpec()
        a = sample_gp(x, kernel, seed=42)
        b = sample_gp(x, kernel, seed=42)
        np.testing.assert_array_equal(a, b)
        c = sample_gp(x, kernel, seed=43)
        assert not np.array_equal(a, c)

    def test_monte_carlo_covariance(self):
        x = np.array([[0.0], [0.5], [1.5]])
        kernel = KernelSpec("exponential", sigma2=1.0, rho=1.0)
        tau2 = 0.25
        draws = np.stack(
            [sample_gp(x, kernel, mu=0.7, tau2=tau2, seed=s) for s in range(2000)]
        )
        sample_cov = np.cov(draws.T)
        expected = cov_matrix(x, kernel) + tau2 * np.eye(3)
        np.testing.assert_allclose(sample_cov, expected, rtol=0.10)
        np.testing.assert_allclose(draws.mean(axis=0), 0.7, atol=0.05)


class TestGenCoupledSubject:
    def test_channels_share_rate_and_length(self):
        cfg = CoupledSubjectConfig(duration=60.0)
        s = gen_coupled_subject(0, cfg)
        assert s.flow.fs == s.abd.fs == s.tho.fs == cfg.fs
        assert len(s.flow) == len(s.abd) == len(s.tho) == round(60.0 * cfg.fs)

    def test_fundamental_zero_crossings_shared(self):
        cfg = CoupledSubjectConfig(duration=120.0)
        s = gen_coupled_subject(1, cfg)
        carrier = np.cos(2 * np.pi * s.fundamental_phase)

        def crossings(x):
            return np.flatnonzero(np.signbit(x[:-1]) != np.signbit(x[1:]))

        base = crossings(carrier)
        for series in (s.flow.samples, s.abd_truth[0].samples(), s.tho_truth[0].samples()):
            got = crossings(series)
            assert len(got) == len(base)
            assert np.max(np.abs(got - base)) <= 1

    def test_regularity_budget(self):
        cfg = CoupledSubjectConfig(duration=300.0)
        s = gen_coupled_subject(2, cfg)
        rate = np.gradient(s.fundamental_phase, 1.0 / cfg.fs)
        curvature = np.gradient(rate, 1.0 / cfg.fs)
        assert np.all(rate > 0)
        assert np.max(np.abs(curvature)) <= 0.05 * np.min(rate)
        for truth in s.abd_truth + s.tho_truth:
            slope = np.gradient(truth.amplitude, 1.0 / cfg.fs)
            assert np.all(truth.amplitude > 0)
            assert np.max(np.abs(slope)) <= 0.05 * np.min(rate)

    def test_seeds_differ_but_schema_matches(self):
        cfg = CoupledSubjectConfig(duration=60.0)
        a = gen_coupled_subject(10, cfg)
        b = gen_coupled_subject(11, cfg)
        assert not np.allclose(a.flow.samples, b.flow.samples)
        assert len(a.abd_truth) == len(b.abd_truth) == 4

    def test_same_seed_reproducible(self):
        cfg = CoupledSubjectConfig(duration=60.0)
        a = gen_coupled_subject(10, cfg)
        b = gen_coupled_subject(10, cfg)
        np.testing.assert_array_equal(a.flow.samples, b.flow.samples)
        np.testing.assert_array_equal(a.abd.samples, b.abd.samples)
        np.testing.assert_array_equal(a.tho.samples, b.tho.samples)

    def test_flow_is_bounded_saturation(self):
        cfg = CoupledSubjectConfig(duration=60.0)
        s = gen_coupled_subject(3, cfg)
        assert np.max(np.abs(s.flow.samples)) <= cfg.flow_gain
