"""Sampling, low-pass filtering, and normalization."""

import numpy as np
import pytest

from pipeloc import (DegenerateSignalError, LowPassFilter, SampledSignal,
                     channel_response, design_lowpass, lp_filter,
                     normalize_max)
from pipeloc.sensing import SensorConfig, energy_bandwidth, sample_received

from conftest import chain_network, chain_sensors


@pytest.fixture(scope="module")
def chain_response(chain_flow):
    tx, rx = chain_sensors()
    return channel_response(chain_network(), chain_flow, tx, rx)


class TestSampling:
    def test_noiseless_sampling_matches_expected(self):
        cfg = SensorConfig(sampling_rate=2.0, noise_variance=0.0)
        sig = sample_received(lambda t: t ** 2, 3.0, cfg, horizon=5.0)
        ts = 0.5 * np.arange(11)
        np.testing.assert_allclose(sig.samples, 3.0 * ts ** 2, rtol=1e-12)
        assert sig.dt == 0.5

    def test_noise_is_reproducible_with_rng(self):
        cfg = SensorConfig(sampling_rate=2.0, noise_variance=4.0)
        a = sample_received(np.zeros_like, 1.0, cfg, 100.0,
                            rng=np.random.default_rng(5))
        b = sample_received(np.zeros_like, 1.0, cfg, 100.0,
                            rng=np.random.default_rng(5))
        np.testing.assert_array_equal(a.samples, b.samples)
        assert np.var(a.samples) == pytest.approx(4.0, rel=0.2)

    def test_invalid_config_rejected(self):
        with pytest.raises(ValueError):
            SensorConfig(sampling_rate=0.0, noise_variance=1.0)
        with pytest.raises(ValueError):
            SensorConfig(sampling_rate=2.0, noise_variance=-1.0)


class TestEnergyBandwidth:
    def test_sinusoid_bandwidth(self):
        # [DERIVED] a pure tone's 99%-energy bandwidth is its frequency
        fs = 100.0
        t = np.arange(4096) / fs
        f0 = 5.0
        bw = energy_bandwidth(np.sin(2.0 * np.pi * f0 * t), fs)
        assert bw == pytest.approx(f0, abs=0.2)

    def test_zero_signal_rejected(self):
        with pytest.raises(DegenerateSignalError):
            energy_bandwidth(np.zeros(64), 2.0)


class TestLowpass:
    def test_design_properties(self, chain_response):
        filt = design_lowpass([chain_response], fs=2.0)
        assert filt.taps.size % 2 == 1
        assert filt.taps.sum() == pytest.approx(1.0, abs=1e-12)
        assert 2.0 / 4096.0 <= filt.cutoff <= 0.45 * 2.0

    def test_preserves_inband_signal_shape(self, chain_response):
        # the filter keeps the shape of the response it was designed for:
        # high correlation and an unmoved peak (amplitude may dip slightly)
        filt = design_lowpass([chain_response], fs=2.0)
        dt = 0.5
        n = int(chain_response.time_horizon() / dt) + 1
        values = chain_response.evaluate(dt * np.arange(n))
        out = lp_filter(SampledSignal(values, dt), filt)
        corr = np.dot(out.samples, values) / (
            np.linalg.norm(out.samples) * np.linalg.norm(values))
        assert corr > 0.99
        assert abs(int(np.argmax(out.samples)) - int(np.argmax(values))) <= 2
        assert out.samples.max() == pytest.approx(values.max(), rel=0.2)

    def test_group_delay_compensated(self):
        # a centered pulse stays centered after filtering
        taps = np.hamming(31)
        filt = LowPassFilter(taps / taps.sum(), cutoff=0.1)
        x = np.zeros(301)
        x[150] = 1.0
        out = lp_filter(SampledSignal(x, 1.0), filt)
        assert int(np.argmax(out.samples)) == 150

    def test_attenuates_out_of_band_noise(self, chain_response):
        filt = design_lowpass([chain_response], fs=2.0)
        rng = np.random.default_rng(0)
        noise = rng.standard_normal(20000)
        out = lp_filter(SampledSignal(noise, 0.5), filt)
        # white noise variance shrinks by roughly sum(taps^2)
        expected = np.sum(filt.taps ** 2)
        assert np.var(out.samples) == pytest.approx(expected, rel=0.3)
        assert np.var(out.samples) < 0.05 * np.var(noise)

    def test_asymmetric_taps_rejected(self):
        taps = np.array([0.2, 0.5, 0.3])
        with pytest.raises(ValueError):
            LowPassFilter(taps, cutoff=0.1)


class TestNormalize:
    def test_unit_peak(self):
        sig = normalize_max(SampledSignal(np.array([0.1, 2.5, 0.4]), 1.0))
        assert sig.samples.max() == 1.0
        np.testing.assert_allclose(sig.samples, [0.04, 1.0, 0.16])

    def test_nonpositive_peak_rejected(self):
        with pytest.raises(DegenerateSignalError):
            normalize_max(SampledSignal(np.array([-1.0, -0.5]), 1.0))
