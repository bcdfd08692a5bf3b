"""Matched-filter bank construction and source identification.

Each transmitter's filter is built from its analytic expected signal, pushed
through the same low-pass/normalize chain that the received signal sees, and
whitened against the low-pass-colored sensor noise.  The normalization in the
filter formula guarantees a peak output of exactly 1 for the matching clean
signal, so the decision rule picks the filter whose peak output is closest
to 1.  A peak-power-to-noise-variance gate rejects pure-noise inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import linalg as sp_linalg
from scipy import signal as sp_signal

from .channel import ChannelResponse, ReceiverSpec, expected_observation
from .network import FlowField
from .sensing import (DegenerateSignalError, LowPassFilter, SampledSignal,
                      SensorConfig, lp_filter, normalize_max)

# Template tail is considered decayed below this fraction of its peak.
_DECAY_FRACTION = 1e-6
# Diagonal loading applied before the Toeplitz solve.  Keeps the whitened
# filters band-limited: with near-zero loading the whitening inverts the
# low-pass filter's stopband, the filters pick up large high-frequency
# content, and the bank's noise response decorrelates into thousands of
# effectively independent samples whose maximum always trips the detection
# gate.  The loading bounds the stopband amplification so the noise response
# stays as smooth as the low-pass noise itself.
_DIAG_LOADING = 1e-1
# Default peak-power to noise-variance gate.
DEFAULT_DETECTION_THRESHOLD = 20.0
# Noise-estimation window half-width, in template lengths.
_NOISE_WINDOW_FACTOR = 2
# Per-side cap on quiet samples used for the noise estimate, as a fraction of
# the template length.  The filter output's noise level is non-stationary
# (the overlap between filter and signal ramps up and down across the
# stream), so the estimate must come from the quiet stretch nearest the
# peak rather than from the whole window.
_NOISE_PIECE_FRACTION = 4
# The quiet region starts only after a sustained stretch of samples below
# the 10%-of-peak gate (this fraction of the template length), so isolated
# zero crossings inside a peak's oscillatory lobes do not open it early.
_QUIET_RUN_FRACTION = 128


class BankError(ValueError):
    """Matched-filter bank cannot be constructed."""


@dataclass(frozen=True)
class NoiseCovariance:
    """Toeplitz covariance of the low-pass-filtered sensor noise.

    ``acf[k]`` is the noise autocovariance at lag k; the solve uses
    Levinson recursion on the (diagonally loaded) Toeplitz system, falling
    back to a dense Cholesky factorization if the recursion fails.
    """

    acf: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "acf", np.asarray(self.acf, dtype=float))
        if self.acf[0] <= 0.0:
            raise BankError("noise variance at lag zero must be positive")

    @property
    def size(self) -> int:
        return self.acf.size

    def _loaded_column(self) -> np.ndarray:
        col = self.acf.copy()
        col[0] += _DIAG_LOADING * col[0]
        return col

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        col = self._loaded_column()
        try:
            return sp_linalg.solve_toeplitz(col, rhs)
        except np.linalg.LinAlgError:
            full = sp_linalg.toeplitz(col)
            factor = sp_linalg.cho_factor(full)
            return sp_linalg.cho_solve(factor, rhs)

    def matvec(self, vec: np.ndarray) -> np.ndarray:
        return sp_linalg.matmul_toeplitz(self._loaded_column(), vec)


@dataclass(frozen=True)
class MatchedFilterBank:
    """Per-transmitter whitened, normalized filters on a common length."""

    tx_ids: Sequence[int]
    templates: np.ndarray      # (U, M) normalized expected signals
    filters: np.ndarray        # (U, M) whitened filter vectors
    noise: NoiseCovariance
    dt: float
    # Per filter: half-width (in samples) of the span around its own clean
    # response peak inside which the matched signature itself exceeds 10% of
    # the peak.  The noise estimate must look beyond this span.
    exclusions: np.ndarray

    @property
    def length(self) -> int:
        return self.templates.shape[1]

    @property
    def n_tx(self) -> int:
        return self.templates.shape[0]


@dataclass(frozen=True)
class LocalizationResult:
    """Outcome of one localization attempt.

    ``tx_id`` is None for a missed detection, i.e. the candidate's
    peak-power-to-noise ratio fell short of the gate.
    """

    tx_id: Optional[int]
    candidate: Optional[int]
    peak_outputs: Dict[int, float]
    peak_to_noise: float
    peak_index: int

    @property
    def missed(self) -> bool:
        return self.tx_id is None


def noise_autocovariance(filt: LowPassFilter, noise_variance: float,
                         length: int) -> NoiseCovariance:
    """ACF of white sensor noise after the low-pass filter, lags 0..length-1."""
    taps = filt.taps
    full = np.correlate(taps, taps, mode="full")
    acf = np.zeros(length)
    n = min(length, taps.size)
    acf[:n] = noise_variance * full[taps.size - 1:taps.size - 1 + n]
    return NoiseCovariance(acf)


def build_bank(responses: Sequence[ChannelResponse], flow: FlowField,
               rx: ReceiverSpec, filt: LowPassFilter,
               cfg: SensorConfig) -> MatchedFilterBank:
    """Construct the filter bank from the analytic channel responses.

    Templates are unit-release expected signals sampled from release time,
    low-pass filtered, and peak-normalized (the release amplitude cancels
    under the normalization).  The common length M is the smallest by which
    every template has decayed below 1e-6 of its peak.
    """
    if not responses:
        raise BankError("response bank is empty")
    if cfg.noise_variance <= 0.0:
        raise BankError("noise variance must be positive to whiten")
    dt = cfg.dt
    pad = filt.taps.size * dt
    raw_templates: List[np.ndarray] = []
    m = 0
    for resp in responses:
        horizon = resp.time_horizon() + pad
        ts = dt * np.arange(int(math.floor(horizon / dt)) + 1)
        values = expected_observation(resp, flow, rx, 1.0, ts)
        sig = normalize_max(lp_filter(SampledSignal(values, dt), filt))
        x = sig.samples
        above = np.nonzero(np.abs(x) > _DECAY_FRACTION)[0]
        if above.size == 0:
            raise BankError(f"template for tx {resp.tx_id} is empty")
        raw_templates.append(x)
        m = max(m, int(above[-1]) + 1)

    templates = np.zeros((len(responses), m))
    for i, x in enumerate(raw_templates):
        k = min(m, x.size)
        templates[i, :k] = x[:k]

    noise = noise_autocovariance(filt, cfg.noise_variance, m)
    filters = np.empty_like(templates)
    for i in range(templates.shape[0]):
        whitened = noise.solve(templates[i])
        gain = float(templates[i] @ whitened)
        if gain <= 0.0:
            raise BankError("non-positive whitening gain")
        filters[i] = whitened / gain

    exclusions = np.empty(templates.shape[0], dtype=int)
    for i in range(templates.shape[0]):
        clean = sp_signal.fftconvolve(templates[i], filters[i][::-1],
                                      mode="full")
        center = int(np.argmax(np.abs(clean)))
        loud = np.nonzero(np.abs(clean) >= 0.1 * np.abs(clean[center]))[0]
        exclusions[i] = int(max(loud[-1] - center, center - loud[0]))
    return MatchedFilterBank([r.tx_id for r in responses], templates,
                             filters, noise, dt, exclusions)


def filter_outputs(signal: SampledSignal, bank: MatchedFilterBank,
                   filt: LowPassFilter) -> np.ndarray:
    """Pre-process the raw signal and run it through the whole bank.

    Row g holds the matched-filter output sequence for transmitter g; column
    k is the output for the length-M window ending at sample k (windows
    reaching before the start of the stream are zero-padded).
    """
    sig = normalize_max(lp_filter(signal, filt))
    outputs = np.empty((bank.n_tx, sig.samples.size + bank.length - 1))
    for g in range(bank.n_tx):
        # Correlation: slide the filter over the signal in forward time order.
        outputs[g] = sp_signal.fftconvolve(sig.samples, bank.filters[g][::-1],
                                           mode="full")
    return outputs


def localize(signal: SampledSignal, bank: MatchedFilterBank,
             filt: LowPassFilter,
             threshold: float = DEFAULT_DETECTION_THRESHOLD
             ) -> LocalizationResult:
    """Identify the active transmitter, or report a missed detection.

    The candidate is the transmitter whose peak filter output lies closest
    to 1.  The noise variance is estimated from the candidate's own output
    inside a window around its peak, using only samples past the point where
    the amplitude has dropped below 10% of the peak.
    """
    if len(signal) < bank.length:
        raise ValueError("signal shorter than the filter length")
    try:
        outputs = filter_outputs(signal, bank, filt)
    except DegenerateSignalError:
        return LocalizationResult(None, None, {}, 0.0, -1)

    peaks = outputs.max(axis=1)
    candidate = int(np.argmin(np.abs(peaks - 1.0)))
    peak_outputs = {tx_id: float(p) for tx_id, p in zip(bank.tx_ids, peaks)}

    y = outputs[candidate]
    k_star = int(np.argmax(y))
    y_max = float(y[k_star])
    profile = _profile_for(bank, candidate, y.size - bank.length + 1)
    noise_var = _estimate_noise_variance(y, k_star, y_max, bank.length,
                                         profile,
                                         int(bank.exclusions[candidate]))
    if noise_var is None or noise_var <= 0.0:
        return LocalizationResult(None, int(bank.tx_ids[candidate]),
                                  peak_outputs, 0.0, k_star)
    ratio = y_max ** 2 / noise_var
    tx_id = int(bank.tx_ids[candidate]) if ratio > threshold else None
    return LocalizationResult(tx_id, int(bank.tx_ids[candidate]),
                              peak_outputs, ratio, k_star)


_PROFILE_CACHE: Dict[tuple, np.ndarray] = {}


def _profile_for(bank: MatchedFilterBank, candidate: int,
                 n_sig: int) -> np.ndarray:
    key = (id(bank), bank.length, candidate, n_sig)
    cached = _PROFILE_CACHE.get(key)
    if cached is None:
        cached = _noise_gain_profile(bank.filters[candidate],
                                     bank.noise.acf, n_sig)
        if len(_PROFILE_CACHE) > 256:
            _PROFILE_CACHE.clear()
        _PROFILE_CACHE[key] = cached
    return cached


def _noise_gain_profile(filter_vec: np.ndarray, acf: np.ndarray,
                        n_sig: int) -> np.ndarray:
    """Noise variance of each output sample, on the full-convolution grid.

    The filter only partially overlaps the record near the stream edges, so
    the output noise variance is the quadratic form of the noise covariance
    over the overlapping filter segment.  The covariance is banded (the
    low-pass noise decorrelates beyond the filter taps), so the quadratic
    form reduces to a cumulative sum per lag.
    """
    f = filter_vec[::-1]
    m = f.size
    out_len = n_sig + m - 1
    k = np.arange(out_len)
    seg_lo = np.maximum(k - n_sig + 1, 0)
    seg_hi = np.minimum(k, m - 1)          # inclusive
    profile = np.zeros(out_len)
    for lag in np.nonzero(acf != 0.0)[0]:
        pair = f[:m - lag] * f[lag:]
        csum = np.concatenate(([0.0], np.cumsum(pair)))
        lo = np.minimum(seg_lo, m - lag)
        hi = np.maximum(np.minimum(seg_hi - lag + 1, m - lag), lo)
        contrib = csum[hi] - csum[lo]
        profile += (acf[lag] if lag == 0 else 2.0 * acf[lag]) * contrib
    return profile


def _estimate_noise_variance(y: np.ndarray, k_star: int, y_max: float,
                             m: int, profile: np.ndarray,
                             exclusion: int) -> Optional[float]:
    lo = max(0, k_star - _NOISE_WINDOW_FACTOR * m)
    hi = min(y.size, k_star + _NOISE_WINDOW_FACTOR * m + 1)
    gate = 0.1 * abs(y_max)
    below = np.abs(y) < gate

    cap = max(m // _NOISE_PIECE_FRACTION, 256)
    run = max(m // _QUIET_RUN_FRACTION, 4)
    # The candidate's own signature occupies k_star +- exclusion; the quiet
    # region can only start beyond it.
    left_edge = max(lo, min(k_star - exclusion, k_star))
    right_edge = min(hi, k_star + exclusion)
    spans = []
    left = _first_quiet_run(below[lo:left_edge][::-1], run)
    if left is not None:
        stop = left_edge - left
        spans.append((max(lo, stop - cap), stop))
    right = _first_quiet_run(below[right_edge:hi], run)
    if right is not None:
        start = right_edge + right
        spans.append((start, min(hi, start + cap)))

    # Refer each quiet stretch's level to the peak position using the known
    # noise-gain profile (the noise level varies across the stream because
    # the filter's overlap with the record ramps up and down).  Each estimate
    # is a one-sided upper confidence value: the mean square is inflated by
    # six times its own standard error, with the effective sample count derived
    # from the stretch's empirical correlation length.  The larger of the two
    # one-sided estimates wins.
    gain_star = profile[k_star]
    estimates: List[float] = []
    for a, b in spans:
        if b <= a:
            continue
        gain = float(np.mean(profile[a:b]))
        # A stretch where the filter barely overlaps the record says nothing
        # about the noise level at the peak; extrapolating from it mostly
        # amplifies whatever deterministic tail lives there.
        if gain <= 0.1 * gain_star:
            continue
        piece = y[a:b]
        level = float(np.mean(piece ** 2))
        if level <= 0.0:
            continue
        n_eff = piece.size / _correlation_length(piece)
        estimates.append(level * (1.0 + 6.0 / math.sqrt(n_eff))
                         * gain_star / gain)
    if not estimates:
        return None
    return max(estimates)


def _first_quiet_run(below: np.ndarray, run: int) -> Optional[int]:
    """Start of the first run of ``run`` consecutive True values, or None.

    A single dip below the gate inside an oscillatory lobe does not mark the
    start of the quiet region; the amplitude must stay below the gate for a
    sustained stretch.
    """
    if below.size < run:
        return None
    counts = np.convolve(below.astype(float), np.ones(run), mode="valid")
    hits = np.nonzero(counts >= run)[0]
    return int(hits[0]) if hits.size else None


def _correlation_length(piece: np.ndarray) -> float:
    """Lag at which the piece's autocorrelation first drops below 1/2."""
    x = piece - piece.mean()
    denom = float(x @ x)
    if denom <= 0.0:
        return float(piece.size)
    for lag in range(1, piece.size):
        if float(x[:-lag] @ x[lag:]) < 0.5 * denom:
            return float(lag)
    return float(piece.size)
