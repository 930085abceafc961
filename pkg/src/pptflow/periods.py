"""FFT-based multi-period recognition.

The spectrum used for frequency *selection* is averaged over batch and
channels (one shared period set per batch), while the per-sample weights
are kept on the autodiff tape so gradients flow through the amplitude
path during training.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import InputTooShortError, ReducedTopKWarning


@dataclass(frozen=True)
class PeriodEntry:
    freq: int
    period: int
    weight: float


@dataclass(frozen=True)
class PeriodSet:
    entries: tuple[PeriodEntry, ...]
    length: int

    @property
    def freqs(self):
        return [e.freq for e in self.entries]

    @property
    def periods(self):
        return [e.period for e in self.entries]


def amplitude_spectrum(x):
    """Mean amplitude over batch and channels; the DC bin is zeroed.

    ``x`` is a Tensor or array of shape [B, T, d].  Returns a Tensor of
    shape [T//2 + 1]; differentiable when ``x`` is on the tape.
    """
    x = ad.as_tensor(x)
    if x.ndim != 3:
        raise ValueError(f"amplitude_spectrum expects [B, T, d], got {x.shape}")
    t_len = x.shape[1]
    if t_len < 4:
        raise InputTooShortError(
            f"amplitude_spectrum requires T >= 4, got {t_len}"
        )
    mag = ad.rfft_magnitudes(x, axis=1)          # [B, F, d]
    mean = mag.mean(axis=2).mean(axis=0)         # [F]
    dc_mask = np.ones(mean.shape[0])
    dc_mask[0] = 0.0
    return ad.mul(mean, ad.constant(dc_mask))


def topk_periods(spectrum, k, t_len):
    """Select the k largest-amplitude frequencies and their periods.

    Ties break toward the lower frequency (longer period).  Frequencies
    whose period floor(T/f) would be < 2 are excluded, as is the DC bin.
    """
    amps = spectrum.data if isinstance(spectrum, ad.Tensor) else np.asarray(spectrum)
    if not 1 <= k <= t_len // 2:
        raise ValueError(f"k must satisfy 1 <= k <= T/2, got k={k}, T={t_len}")
    candidates = [
        f
        for f in range(1, amps.shape[0])
        if t_len // f >= 2 and amps[f] > 0.0
    ]
    if k > len(candidates):
        warnings.warn(
            f"requested top-{k} periods but only {len(candidates)} usable "
            "spectral bins exist; returning all of them",
            ReducedTopKWarning,
        )
    order = sorted(candidates, key=lambda f: (-amps[f], f))[:k]
    entries = tuple(
        PeriodEntry(freq=f, period=t_len // f, weight=float(amps[f]))
        for f in order
    )
    return PeriodSet(entries=entries, length=t_len)


def per_sample_weights(x, freqs):
    """Channel-mean amplitude of each sample at the selected frequencies.

    Returns a Tensor of shape [B, k]; stays on the tape.
    """
    x = ad.as_tensor(x)
    mag = ad.rfft_magnitudes(x, axis=1)          # [B, F, d]
    chan_mean = mag.mean(axis=2)                 # [B, F]
    return ad.take(chan_mean, list(freqs), axis=1)


def detect_periods(x, k):
    """Shared period set plus per-sample weights for a batch [B, T, d]."""
    x = ad.as_tensor(x)
    spectrum = amplitude_spectrum(x)
    period_set = topk_periods(spectrum, min(k, x.shape[1] // 2), x.shape[1])
    weights = per_sample_weights(x, period_set.freqs)
    return period_set, weights
