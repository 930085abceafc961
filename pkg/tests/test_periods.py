import numpy as np
import pytest

from pptflow import autodiff as ad
from pptflow.errors import InputTooShortError, ReducedTopKWarning
from pptflow.periods import (
    amplitude_spectrum,
    detect_periods,
    per_sample_weights,
    topk_periods,
)


def make_batch(x):
    """Wrap a 1-D series as a [1, T, 1] batch tensor."""
    x = np.asarray(x, dtype=np.float64)
    return ad.constant(x.reshape(1, -1, 1))


class TestAmplitudeSpectrum:
    def test_constant_series_all_zero(self):
        spec = amplitude_spectrum(make_batch(np.full(16, 5.0)))
        np.testing.assert_allclose(spec.data, 0.0, atol=1e-9)

    def test_sine_peaks_at_its_frequency(self):
        t = np.arange(64)
        spec = amplitude_spectrum(make_batch(np.sin(2 * np.pi * 4 * t / 64)))
        assert int(np.argmax(spec.data)) == 4

    def test_dc_bin_suppressed(self):
        t = np.arange(32)
        spec = amplitude_spectrum(make_batch(100.0 + np.sin(2 * np.pi * t / 8)))
        assert spec.data[0] == 0.0

    def test_channel_average(self):
        t = np.arange(32)
        a = np.sin(2 * np.pi * 4 * t / 32)
        b = np.sin(2 * np.pi * 8 * t / 32)
        x = ad.constant(np.stack([a, b], axis=-1)[None, :, :])
        spec = amplitude_spectrum(x).data
        # each sine contributes T/2 = 16 in its own channel, halved by averaging
        assert spec[4] == pytest.approx(8.0, abs=1e-9)
        assert spec[8] == pytest.approx(8.0, abs=1e-9)

    def test_too_short(self):
        with pytest.raises(InputTooShortError):
            amplitude_spectrum(make_batch([1.0, 2.0]))


class TestTopkPeriods:
    def test_recovers_three_sines(self):
        t = np.arange(96)
        x = (np.sin(2 * np.pi * t / 24) + 0.8 * np.sin(2 * np.pi * t / 12)
             + 0.6 * np.sin(2 * np.pi * t / 8))
        spec = amplitude_spectrum(make_batch(x))
        pset = topk_periods(spec, 3, 96)
        assert sorted(pset.periods) == [8, 12, 24]
        # ordered by descending amplitude
        assert pset.periods == [24, 12, 8]

    def test_period_is_floor_of_ratio(self):
        t = np.arange(64)
        x = np.sin(2 * np.pi * 5 * t / 64)
        spec = amplitude_spectrum(make_batch(x))
        (entry,) = topk_periods(spec, 1, 64).entries
        assert entry.freq == 5
        assert entry.period == 64 // 5 == 12

    def test_tie_break_prefers_lower_frequency(self):
        spec = ad.constant(np.array([0.0, 1.0, 1.0, 1.0, 1.0]))
        pset = topk_periods(spec, 2, 8)
        assert pset.freqs == [1, 2]

    def test_nyquist_period_two_allowed(self):
        t = np.arange(16)
        x = np.sin(2 * np.pi * 8 * t / 16 + 0.3)  # period 16//8 = 2
        spec = amplitude_spectrum(make_batch(x))
        pset = topk_periods(spec, 1, 16)
        assert pset.periods[0] == 2

    def test_short_periods_excluded(self):
        # with T=7 the f=3 bin implies period 7//3 = 2 but f itself must
        # keep the period >= 2; a bin whose period would floor below 2 is
        # never selectable even when its amplitude dominates
        spec = np.array([0.0, 1.0, 1.0, 1.0, 10.0])
        pset = topk_periods(spec, 3, 7)
        assert 4 not in pset.freqs  # 7 // 4 == 1

    def test_reduced_topk_warns(self):
        spec = np.array([0.0, 3.0, 0.0, 0.0, 0.0])
        with pytest.warns(ReducedTopKWarning):
            pset = topk_periods(spec, 3, 8)
        assert len(pset.entries) == 1
        assert pset.freqs == [1]

    def test_k_bounds(self):
        spec = ad.constant(np.ones(9))
        with pytest.raises(ValueError):
            topk_periods(spec, 0, 16)
        with pytest.raises(ValueError):
            topk_periods(spec, 9, 16)


class TestDetectPeriods:
    def test_weights_match_spectrum_for_single_sample(self):
        t = np.arange(96)
        x = np.sin(2 * np.pi * t / 24) + 0.5 * np.sin(2 * np.pi * t / 8)
        batch = make_batch(x)
        pset, weights = detect_periods(batch, 2)
        spec = amplitude_spectrum(batch).data
        assert weights.data.shape == (1, 2)
        for j, f in enumerate(pset.freqs):
            assert weights.data[0, j] == pytest.approx(spec[f], abs=1e-9)

    def test_per_sample_weights_differ_across_batch(self):
        t = np.arange(48)
        a = 2.0 * np.sin(2 * np.pi * 4 * t / 48)
        b = 0.5 * np.sin(2 * np.pi * 4 * t / 48)
        x = ad.constant(np.stack([a, b])[:, :, None])
        w = per_sample_weights(x, [4])
        assert w.data[0, 0] > w.data[1, 0]
        assert w.data[0, 0] == pytest.approx(4 * w.data[1, 0], rel=1e-9)

    def test_detected_periods_scale_invariant(self):
        t = np.arange(96)
        x = np.sin(2 * np.pi * t / 24) + 0.7 * np.sin(2 * np.pi * t / 12)
        p1, _ = detect_periods(make_batch(x), 2)
        p2, _ = detect_periods(make_batch(1000.0 * x), 2)
        assert p1.periods == p2.periods
        assert p1.freqs == p2.freqs

    def test_recovery_under_noise(self):
        rng = np.random.default_rng(42)
        t = np.arange(96)
        hits = 0
        for _ in range(20):
            x = np.sin(2 * np.pi * t / 16) + 0.05 * rng.normal(size=96)
            pset, _ = detect_periods(make_batch(x), 1)
            hits += pset.periods[0] == 16
        assert hits == 20

    def test_weights_carry_gradient(self):
        rng = np.random.default_rng(7)
        x = ad.Param(rng.normal(size=(2, 32, 1)), "x")
        _, w = detect_periods(x, 2)
        ad.backward(w.sum())
        assert np.abs(x.grad).max() > 0.0
