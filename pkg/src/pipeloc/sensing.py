"""Discrete sensor sampling, low-pass filtering, and peak normalization.

The sensor takes one noisy reading of the expected molecule count every
``1/sampling_rate`` seconds.  The low-pass filter is a Hamming-windowed sinc
FIR with unit DC gain; its cutoff tracks the frequency content of the known
channel responses so the filter removes as much sensor noise as possible
without distorting the signal shapes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import signal as sp_signal

from .channel import ChannelResponse

# Fraction of Nyquist the cutoff may not exceed.
_NYQUIST_CAP = 0.9
# Fraction of the sampled response energy defining the bandwidth.
_ENERGY_FRACTION = 0.99


class DegenerateSignalError(ValueError):
    """Signal has no positive peak; normalization is undefined."""


@dataclass(frozen=True)
class SensorConfig:
    sampling_rate: float          # Hz
    noise_variance: float         # molecules^2 per sample
    seed: int = 0

    def __post_init__(self):
        if self.sampling_rate <= 0.0:
            raise ValueError("sampling rate must be positive")
        if self.noise_variance < 0.0:
            raise ValueError("noise variance must be non-negative")

    @property
    def dt(self) -> float:
        return 1.0 / self.sampling_rate


@dataclass(frozen=True)
class SampledSignal:
    """Uniformly sampled real-valued time series."""

    samples: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "samples",
                           np.asarray(self.samples, dtype=float))
        if self.samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples must be finite")

    def __len__(self) -> int:
        return self.samples.size

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.samples.size)


@dataclass(frozen=True)
class LowPassFilter:
    """Linear-phase FIR taps with unit DC gain; odd length."""

    taps: np.ndarray
    cutoff: float    # Hz

    def __post_init__(self):
        object.__setattr__(self, "taps", np.asarray(self.taps, dtype=float))
        if self.taps.size % 2 != 1:
            raise ValueError("filter length must be odd")
        if abs(self.taps.sum() - 1.0) > 1e-12:
            raise ValueError("filter must have unit DC gain")
        if not np.allclose(self.taps, self.taps[::-1], rtol=0, atol=1e-12):
            raise ValueError("filter must be symmetric")


def sample_received(expected: Callable[[np.ndarray], np.ndarray],
                    release_count: float, cfg: SensorConfig, horizon: float,
                    rng: Optional[np.random.Generator] = None) -> SampledSignal:
    """Noisy sensor samples over ``[0, horizon]``.

    ``expected`` maps time to the expected count for a unit release; the
    realized release count scales it.  Additive noise is iid zero-mean
    Gaussian with the configured variance.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    k = int(math.floor(horizon / cfg.dt)) + 1
    ts = cfg.dt * np.arange(k)
    samples = release_count * np.asarray(expected(ts), dtype=float)
    if cfg.noise_variance > 0.0:
        samples = samples + math.sqrt(cfg.noise_variance) * rng.standard_normal(k)
    return SampledSignal(samples, cfg.dt)


def energy_bandwidth(values: np.ndarray, fs: float,
                     fraction: float = _ENERGY_FRACTION) -> float:
    """Smallest frequency containing ``fraction`` of the sampled energy."""
    values = np.asarray(values, dtype=float)
    spectrum = np.abs(np.fft.rfft(values)) ** 2
    total = spectrum.sum()
    if total <= 0.0:
        raise DegenerateSignalError("signal has no energy")
    idx = int(np.searchsorted(np.cumsum(spectrum), fraction * total))
    freqs = np.fft.rfftfreq(values.size, d=1.0 / fs)
    return float(freqs[min(idx, freqs.size - 1)])


def design_lowpass(responses: Sequence[ChannelResponse],
                   fs: float) -> LowPassFilter:
    """Windowed-sinc FIR whose cutoff covers every response's bandwidth.

    The cutoff is the largest 99%-energy bandwidth over the sampled
    responses, capped at 0.45 * fs; the length is ``4 fs / cutoff`` rounded
    up to odd, so the transition band scales with the cutoff.
    """
    if not responses:
        raise ValueError("response bank is empty")
    dt = 1.0 / fs
    widest = 0.0
    for resp in responses:
        horizon = resp.time_horizon()
        n = max(int(math.floor(horizon / dt)) + 1, 8)
        values = resp.evaluate(dt * np.arange(n))
        widest = max(widest, energy_bandwidth(values, fs))
    cap = 0.5 * fs * _NYQUIST_CAP
    # Guard: never drop below one DFT bin of the widest response grid.
    cutoff = min(cap, max(widest, fs / 4096.0))
    length = int(math.ceil(4.0 * fs / cutoff))
    if length % 2 == 0:
        length += 1
    taps = sp_signal.firwin(length, cutoff, fs=fs, window="hamming")
    taps = taps / taps.sum()
    return LowPassFilter(taps, cutoff)


def lp_filter(sig: SampledSignal, filt: LowPassFilter) -> SampledSignal:
    """Convolve with the FIR taps; output stays time-aligned with the input.

    Same-length output with the group delay of the symmetric filter
    compensated, so peak positions are preserved.
    """
    out = sp_signal.fftconvolve(sig.samples, filt.taps, mode="full")
    half = (filt.taps.size - 1) // 2
    out = out[half:half + sig.samples.size]
    return SampledSignal(out, sig.dt, sig.t0)


def normalize_max(sig: SampledSignal) -> SampledSignal:
    """Divide by the maximum sample so the new maximum is exactly 1."""
    peak = float(np.max(sig.samples))
    if peak <= 0.0:
        raise DegenerateSignalError("maximum sample is not positive")
    return SampledSignal(sig.samples / peak, sig.dt, sig.t0)
