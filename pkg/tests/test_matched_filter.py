"""Whitened matched-filter bank and the localization decision."""

import numpy as np
import pytest

from pipeloc import (NoiseCovariance, SampledSignal, build_bank,
                     channel_response, design_lowpass, localize)
from pipeloc.matched_filter import filter_outputs, noise_autocovariance
from pipeloc.sensing import SensorConfig
from pipeloc.channel import expected_observation

from conftest import (chain_network, chain_sensors, diamond_network,
                      diamond_sensors)


@pytest.fixture(scope="module")
def two_tx_bank(chain_flow, diamond_flow):
    """Two structurally different single-tx scenes merged into one bank."""
    net_c, net_d = chain_network(), diamond_network()
    tx_c, rx_c = chain_sensors()
    tx_d, rx_d = diamond_sensors()
    resp_c = channel_response(net_c, chain_flow, tx_c, rx_c)
    resp_d = channel_response(net_d, diamond_flow, tx_d, rx_d)
    # rebadge so ids differ
    resp_d = type(resp_d)(tx_id=2, components=resp_d.components)
    cfg = SensorConfig(sampling_rate=2.0, noise_variance=1e-6)
    filt = design_lowpass([resp_c, resp_d], fs=2.0)
    bank = build_bank([resp_c, resp_d], chain_flow, rx_c, filt, cfg)
    # per-tx clean unit-release signals on a common grid
    horizon = max(resp_c.time_horizon(), resp_d.time_horizon()) \
        + 2.0 * filt.taps.size * 0.5
    ts = 0.5 * np.arange(int(horizon / 0.5) + 1)
    clean = {
        1: expected_observation(resp_c, chain_flow, rx_c, 1.0, ts),
        2: expected_observation(resp_d, diamond_flow, rx_d, 1.0, ts),
    }
    return bank, filt, clean


class TestNoiseCovariance:
    def test_solve_matches_dense(self):
        rng = np.random.default_rng(3)
        acf = np.array([1.0, 0.6, 0.3, 0.1, 0.0, 0.0])
        cov = NoiseCovariance(acf)
        rhs = rng.standard_normal(6)
        x = cov.solve(rhs)
        from scipy.linalg import toeplitz
        from pipeloc.matched_filter import _DIAG_LOADING
        dense = toeplitz(acf)
        dense[np.diag_indices(6)] *= 1.0 + _DIAG_LOADING
        np.testing.assert_allclose(dense @ x, rhs, atol=1e-10)

    def test_autocovariance_of_filtered_white_noise(self):
        # [DERIVED] empirical ACF of filtered noise matches the analytic one
        taps = np.hamming(21)
        taps /= taps.sum()
        from pipeloc.sensing import LowPassFilter, lp_filter
        filt = LowPassFilter(taps, cutoff=0.05)
        cov = noise_autocovariance(filt, noise_variance=4.0, length=6)
        rng = np.random.default_rng(0)
        x = lp_filter(SampledSignal(2.0 * rng.standard_normal(400000), 1.0),
                      filt).samples
        for k in range(6):
            emp = np.mean(x[:-k or None] * x[k:] if k else x * x)
            assert emp == pytest.approx(cov.acf[k], rel=0.05, abs=1e-3)


class TestBank:
    def test_clean_matching_signal_peaks_at_one(self, two_tx_bank):
        bank, filt, clean = two_tx_bank
        for g, tx_id in enumerate(bank.tx_ids):
            sig = SampledSignal(1e8 * clean[tx_id], 0.5)
            outs = filter_outputs(sig, bank, filt)
            assert outs[g].max() == pytest.approx(1.0, abs=1e-6)

    def test_peak_invariant_to_scale_and_delay(self, two_tx_bank):
        bank, filt, clean = two_tx_bank
        base = filter_outputs(SampledSignal(clean[1], 0.5), bank, filt)
        for scale in (1e-3, 1.0, 1e3):
            for delay in (0, 40):
                shifted = np.concatenate([np.zeros(delay), scale * clean[1]])
                outs = filter_outputs(SampledSignal(shifted, 0.5), bank, filt)
                np.testing.assert_allclose(outs.max(axis=1),
                                           base.max(axis=1), atol=1e-12)

    def test_templates_have_unit_peak(self, two_tx_bank):
        bank, _, _ = two_tx_bank
        np.testing.assert_allclose(bank.templates.max(axis=1), 1.0,
                                   atol=1e-12)


class TestLocalize:
    def test_identifies_clean_sources(self, two_tx_bank):
        bank, filt, clean = two_tx_bank
        for tx_id in bank.tx_ids:
            res = localize(SampledSignal(1e9 * clean[tx_id], 0.5), bank, filt)
            assert res.tx_id == tx_id
            assert not res.missed

    def test_identifies_noisy_sources(self, two_tx_bank):
        bank, filt, clean = two_tx_bank
        rng = np.random.default_rng(8)
        for tx_id in bank.tx_ids:
            noisy = 1e9 * clean[tx_id] + 1e-2 * rng.standard_normal(
                clean[tx_id].size)
            res = localize(SampledSignal(noisy, 0.5), bank, filt)
            assert res.tx_id == tx_id

    def test_gate_separates_noise_from_signal(self, two_tx_bank):
        # pure-noise peak-to-noise ratios sit orders of magnitude below
        # signal ratios (the hard 99% missed-detection property is asserted
        # on the full-size bank in the acceptance suite)
        bank, filt, clean = two_tx_bank
        rng = np.random.default_rng(9)
        noise_ratios = [
            localize(SampledSignal(rng.standard_normal(clean[1].size), 0.5),
                     bank, filt).peak_to_noise
            for _ in range(20)]
        signal_ratio = localize(SampledSignal(1e9 * clean[1], 0.5), bank,
                                filt).peak_to_noise
        assert signal_ratio > 50.0 * max(noise_ratios)
        assert signal_ratio > 100.0 * float(np.median(noise_ratios))

    def test_short_signal_rejected(self, two_tx_bank):
        bank, filt, _ = two_tx_bank
        with pytest.raises(ValueError):
            localize(SampledSignal(np.ones(4), 0.5), bank, filt)
