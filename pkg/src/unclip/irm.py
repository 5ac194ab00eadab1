"""Ideal-ratio-mask oracle: clean/degraded magnitude ratio with degraded phase."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import EPS_NUM
from .signal import Signal
from .stft import Spectrogram, StftConfig, istft, stft

CLAMP_MAX = 2.0


@dataclass(frozen=True, eq=False)
class MaskSpectrogram:
    gains: np.ndarray
    clamp_max: float = CLAMP_MAX


def irm_mask(clean: Spectrogram, degraded: Spectrogram, clamp_max: float = CLAMP_MAX) -> MaskSpectrogram:
    if clean.bins.shape != degraded.bins.shape or clean.config != degraded.config:
        raise ValueError("spectrograms differ in shape or configuration")
    mag_x = np.abs(clean.bins)
    mag_y = np.abs(degraded.bins)
    with np.errstate(divide="ignore", invalid="ignore"):
        gains = mag_x / (mag_y + EPS_NUM)
    gains = np.where(mag_y == 0, np.where(mag_x > 0, clamp_max, 0.0), gains)
    return MaskSpectrogram(np.clip(gains, 0.0, clamp_max), clamp_max)


def apply_mask(mask: MaskSpectrogram, degraded: Spectrogram) -> Spectrogram:
    # real gains scale magnitudes and leave the phase of every bin untouched
    return Spectrogram(mask.gains * degraded.bins, degraded.config, degraded.origin_len)


def apply_oracle(clean: Signal, degraded: Signal, cfg: StftConfig = StftConfig()) -> Signal:
    if len(clean) != len(degraded) or clean.sample_rate != degraded.sample_rate:
        raise ValueError("clean and degraded signals must share length and sample rate")
    X = stft(clean, cfg)
    Y = stft(degraded, cfg)
    out = istft(apply_mask(irm_mask(X, Y), Y), degraded.sample_rate)
    return out
