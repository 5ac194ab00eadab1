"""Mono signal container, WAV I/O and resampling."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

CANONICAL_RATE = 16000

PCM16_MAX = 1.0 - 2.0 ** -15


class AudioFormatError(ValueError):
    """Raised for unreadable, unsupported or empty audio."""


@dataclass(frozen=True, eq=False)
class Signal:
    """A finite mono sample sequence at a fixed sample rate.

    Samples are stored as a read-only float64 array.
    """

    samples: np.ndarray
    sample_rate: int = CANONICAL_RATE

    def __post_init__(self):
        arr = np.array(self.samples, dtype=np.float64, copy=True).reshape(-1)
        if not np.all(np.isfinite(arr)):
            raise ValueError("signal contains non-finite samples")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def with_samples(self, samples) -> "Signal":
        return Signal(samples, self.sample_rate)

    def __repr__(self) -> str:
        return f"Signal(n={len(self)}, sample_rate={self.sample_rate})"


def read_wav(path) -> Signal:
    """Read a WAV file as a mono float64 :class:`Signal`.

    Integer PCM is scaled so that full scale maps to [-1, 1); multi-channel
    audio is averaged to mono.
    """
    path = Path(path)
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except (ValueError, OSError, EOFError) as exc:
        raise AudioFormatError(f"cannot read {path}: {exc}") from exc

    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        # 24-bit PCM arrives left-justified in int32
        x = data.astype(np.float64) / 2.0 ** 31
    elif data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype in (np.float32, np.float64):
        x = data.astype(np.float64)
    else:
        raise AudioFormatError(f"unsupported sample type {data.dtype} in {path}")

    if x.ndim == 2:
        x = x.mean(axis=1)
    if x.size == 0:
        raise AudioFormatError(f"{path} contains no audio")
    return Signal(x, rate)


def write_wav(sig: Signal, path, format: str = "float32") -> None:
    """Write ``sig`` as a mono WAV file.

    ``pcm16`` clamps to [-1, 1 - 2**-15] before quantizing; ``float32``
    stores the samples as IEEE floats.
    """
    if len(sig) == 0:
        raise ValueError("refusing to write a zero-length signal")
    if format == "pcm16":
        x = np.clip(sig.samples, -1.0, PCM16_MAX)
        data = np.round(x * 32768.0).astype(np.int16)
    elif format == "float32":
        data = sig.samples.astype(np.float32)
    else:
        raise ValueError(f"unknown wav format {format!r}")
    wavfile.write(Path(path), sig.sample_rate, data)


def _polyphase_filter(up: int, down: int, half_taps: int = 32, beta: float = 8.0) -> np.ndarray:
    # windowed sinc at the lower of the two Nyquist rates
    max_rate = max(up, down)
    half_len = half_taps * max_rate
    n = np.arange(-half_len, half_len + 1, dtype=np.float64)
    h = np.sinc(n / max_rate) * np.kaiser(n.size, beta)
    # normalize every polyphase branch so DC passes exactly
    for p in range(up):
        h[p::up] /= h[p::up].sum() * up
    return h


def resample(sig: Signal, target_rate: int) -> Signal:
    """Band-limited rational resampling (Kaiser windowed sinc, polyphase)."""
    target_rate = int(target_rate)
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if target_rate == sig.sample_rate:
        return sig
    g = math.gcd(target_rate, sig.sample_rate)
    up, down = target_rate // g, sig.sample_rate // g
    n_out = int(round(len(sig) * target_rate / sig.sample_rate))
    if len(sig) == 0:
        return Signal(np.zeros(0), target_rate)
    y = resample_poly(sig.samples, up, down, window=_polyphase_filter(up, down))
    if y.size < n_out:
        y = np.pad(y, (0, n_out - y.size))
    return Signal(y[:n_out], target_rate)
