"""Tests for the STFT, the reassignment rule, and synchrosqueezing."""

import numpy as np
import pytest

from breathflow import (
    FrequencyGrid,
    TimeSeries,
    WindowSpec,
    reassignment_map,
    read_tfr,
    sst,
    stft,
    write_tfr,
)
from breathflow.tfr import DISCARDED

FS = 10.0
GRID = FrequencyGrid(0.0, 2.0, 1e-3)
WINDOW = WindowSpec()


def make_signal(fn, duration, fs=FS):
    t = np.arange(round(duration * fs)) / fs
    return TimeSeries(fn(t), fs)


def interior(tfr, margin):
    t = tfr.frame_times
    return (t >= t[0] + margin) & (t <= t[-1] - margin)


class TestFrequencyGrid:
    def test_bin_count(self):
        assert FrequencyGrid(0.0, 2.0, 1e-3).bins == 2001
        assert FrequencyGrid(0.1, 0.5, 0.1).bins == 5

    def test_frequencies(self):
        g = FrequencyGrid(0.5, 1.0, 0.25)
        np.testing.assert_allclose(g.frequencies, [0.5, 0.75, 1.0])

    def test_invariants(self):
        with pytest.raises(ValueError):
            FrequencyGrid(-0.1, 1.0, 0.1)
        with pytest.raises(ValueError):
            FrequencyGrid(0.0, 1.0, 0.0)
        with pytest.raises(ValueError):
            FrequencyGrid(1.0, 1.0, 0.1)


class TestWindowSpec:
    def test_default_support(self):
        w = WindowSpec()
        assert w.scale == 32.0
        assert w.half_support == pytest.approx(6.0 * np.sqrt(16.0))

    def test_window_shape(self):
        w = WindowSpec(scale=32.0)
        t = np.linspace(-5, 5, 11)
        np.testing.assert_allclose(w.evaluate(t), np.exp(-(t**2) / 32.0))
        assert w.evaluate(np.array([0.0]))[0] == 1.0
        np.testing.assert_allclose(w.evaluate(t), w.evaluate(-t))
        # derivative of exp(-t^2/s) is -(2t/s) exp(-t^2/s)
        np.testing.assert_allclose(
            w.evaluate_derivative(t), -(2 * t / 32.0) * np.exp(-(t**2) / 32.0)
        )


class TestStft:
    def test_zero_signal(self):
        ts = make_signal(lambda t: np.zeros_like(t), 60.0)
        out = stft(ts, WINDOW, GRID)
        assert out.kind == "STFT"
        assert out.values.shape == (len(ts), GRID.bins)
        np.testing.assert_allclose(np.abs(out.values), 0.0, atol=1e-12)

    def test_tone_peak_location_and_magnitude(self):
        f0 = 0.3
        ts = make_signal(lambda t: np.cos(2 * np.pi * f0 * t), 60.0)
        out = stft(ts, WINDOW, GRID)
        mask = interior(out, WINDOW.half_support)
        mags = np.abs(out.values[mask])
        peak_bins = np.argmax(mags, axis=1)
        target = round((f0 - GRID.f_min) / GRID.df)
        assert np.all(np.abs(peak_bins - target) <= 1)
        # Gaussian window transform: hhat(0) = sqrt(pi*s), tone peak = hhat(0)/2.
        expected = 0.5 * np.sqrt(np.pi * 32.0)
        peaks = mags[np.arange(len(mags)), peak_bins]
        assert np.all(np.abs(peaks - expected) < 0.02 * expected)

    def test_linearity(self):
        rng = np.random.default_rng(11)
        x = make_signal(lambda t: rng.standard_normal(len(t)), 30.0)
        y = make_signal(lambda t: rng.standard_normal(len(t)), 30.0)
        a, b = 1.7, -0.4
        combo = TimeSeries(a * x.samples + b * y.samples, FS)
        grid = FrequencyGrid(0.0, 2.0, 0.01)
        lhs = stft(combo, WINDOW, grid).values
        rhs = a * stft(x, WINDOW, grid).values + b * stft(y, WINDOW, grid).values
        scale = np.max(np.abs(rhs))
        np.testing.assert_allclose(lhs, rhs, atol=1e-10 * scale)

    def test_grid_beyond_nyquist_errors(self):
        ts = make_signal(lambda t: np.cos(t), 60.0)
        with pytest.raises(ValueError):
            stft(ts, WINDOW, FrequencyGrid(0.0, 6.0, 0.01))

    def test_window_wider_than_signal_errors(self):
        ts = make_signal(lambda t: np.cos(t), 10.0)
        with pytest.raises(ValueError):
            stft(ts, WINDOW, FrequencyGrid(0.0, 2.0, 0.01))


class TestReassignmentMap:
    def test_tone_maps_to_its_frequency(self):
        f0 = 0.3
        ts = make_signal(lambda t: np.cos(2 * np.pi * f0 * t), 60.0)
        v_h = stft(ts, WINDOW, GRID)
        v_dh = stft(ts, WINDOW, GRID, derivative=True)
        threshold = 1e-8 * np.max(np.abs(v_h.values))
        omega = reassignment_map(v_h, v_dh, threshold)
        mask = interior(v_h, WINDOW.half_support)
        near = np.abs(GRID.frequencies - f0) < 0.1
        block = omega[mask][:, near]
        kept = np.abs(v_h.values[mask][:, near]) > threshold
        assert np.all(np.abs(block[kept] - f0) < GRID.df + 1e-3)

    def test_below_threshold_is_discarded(self):
        ts = make_signal(lambda t: np.cos(2 * np.pi * 0.3 * t), 60.0)
        v_h = stft(ts, WINDOW, GRID)
        v_dh = stft(ts, WINDOW, GRID, derivative=True)
        threshold = 0.5 * np.max(np.abs(v_h.values))
        omega = reassignment_map(v_h, v_dh, threshold)
        low = np.abs(v_h.values) <= threshold
        assert np.all(omega[low] == DISCARDED)
        assert np.all(np.isfinite(omega[~low]))

    def test_chirp_tracks_instantaneous_frequency(self):
        ts = make_signal(lambda t: np.cos(2 * np.pi * (0.2 * t + 0.01 * t**2)), 60.0)
        v_h = stft(ts, WINDOW, GRID)
        v_dh = stft(ts, WINDOW, GRID, derivative=True)
        omega = reassignment_map(v_h, v_dh, 1e-8 * np.max(np.abs(v_h.values)))
        mask = interior(v_h, WINDOW.half_support)
        idx = np.flatnonzero(mask)
        for ell in idx[::10]:
            true_if = 0.2 + 0.02 * v_h.frame_times[ell]
            ridge_bin = np.argmax(np.abs(v_h.values[ell]))
            assert abs(omega[ell, ridge_bin] - true_if) < 2 * GRID.df

    def test_grid_mismatch_errors(self):
        ts = make_signal(lambda t: np.cos(2 * np.pi * 0.3 * t), 60.0)
        v_h = stft(ts, WINDOW, GRID)
        other = stft(ts, WINDOW, FrequencyGrid(0.0, 2.0, 0.01), derivative=True)
        with pytest.raises(ValueError):
            reassignment_map(v_h, other, 1e-8)


class TestSst:
    def test_zero_signal(self):
        ts = make_signal(lambda t: np.zeros_like(t), 60.0)
        out = sst(ts, WINDOW, GRID)
        assert out.kind == "SST"
        np.testing.assert_allclose(np.abs(out.values), 0.0, atol=1e-12)

    def test_tone_energy_concentrates(self):
        f0 = 0.3
        ts = make_signal(lambda t: np.cos(2 * np.pi * f0 * t), 60.0)
        out = sst(ts, WINDOW, GRID)
        mask = interior(out, WINDOW.half_support)
        target = round((f0 - GRID.f_min) / GRID.df)
        lo, hi = target - 3, target + 4
        for row in np.abs(out.values[mask]) ** 2:
            total = row.sum()
            assert row[lo:hi].sum() >= 0.95 * total

    def test_tone_sharper_than_stft(self):
        f0 = 0.3
        ts = make_signal(lambda t: np.cos(2 * np.pi * f0 * t), 60.0)
        v = stft(ts, WINDOW, GRID)
        s = sst(ts, WINDOW, GRID)
        freqs = GRID.frequencies
        mask = np.flatnonzero(interior(v, WINDOW.half_support))
        for ell in mask[::25]:
            mv = np.abs(v.values[ell])
            ms = np.abs(s.values[ell])
            cv = (freqs * mv).sum() / mv.sum()
            cs = (freqs * ms).sum() / ms.sum()
            second_v = ((freqs - cv) ** 2 * mv).sum() / mv.sum()
            second_s = ((freqs - cs) ** 2 * ms).sum() / ms.sum()
            assert second_s < second_v

    def test_mass_conservation_per_frame(self):
        # Every retained in-grid coefficient lands in exactly one output bin,
        # so the complex bin sums agree with the retained coefficient sums.
        rng = np.random.default_rng(5)
        ts = make_signal(lambda t: rng.standard_normal(len(t)), 52.0)
        v_h = stft(ts, WINDOW, GRID)
        v_dh = stft(ts, WINDOW, GRID, derivative=True)
        threshold = 1e-8 * np.max(np.abs(v_h.values))
        omega = reassignment_map(v_h, v_dh, threshold)
        out = sst(ts, WINDOW, GRID)
        bins = np.rint((omega - GRID.f_min) / GRID.df)
        retained = (
            np.isfinite(omega) & (bins >= 0) & (bins <= GRID.bins - 1)
        )
        expected = np.where(retained, v_h.values, 0).sum(axis=1)
        got = out.values.sum(axis=1)
        scale = np.max(np.abs(expected))
        np.testing.assert_allclose(got, expected, rtol=0, atol=1e-9 * scale)


class TestTfrDump:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        ts = make_signal(lambda t: rng.standard_normal(len(t)), 52.0)
        grid = FrequencyGrid(0.0, 2.0, 0.01)
        tfr = stft(ts, WINDOW, grid)
        path = tmp_path / "dump.bftf"
        write_tfr(path, tfr)
        back = read_tfr(path)
        assert back.kind == tfr.kind
        assert back.grid.bins == tfr.grid.bins
        assert back.grid.f_min == tfr.grid.f_min
        assert back.grid.df == tfr.grid.df
        np.testing.assert_allclose(back.frame_times, tfr.frame_times, atol=1e-9)
        scale = np.max(np.abs(tfr.values))
        np.testing.assert_allclose(
            back.values, tfr.values, rtol=1e-5, atol=1e-5 * scale
        )

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "not_a_dump.bin"
        path.write_bytes(b"something else entirely")
        with pytest.raises(ValueError):
            read_tfr(path)
