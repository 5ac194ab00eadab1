"""Short-time Fourier analysis/synthesis with orthonormal DFT scaling."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .signal import Signal


class Window(str, enum.Enum):
    HANN = "hann"
    RECTANGULAR = "rectangular"


def window_values(kind: Window | str, frame_len: int) -> np.ndarray:
    kind = Window(kind)
    if kind is Window.RECTANGULAR:
        return np.ones(frame_len)
    # periodic Hann; sums to a constant at hop = frame_len / 2**j
    n = np.arange(frame_len)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / frame_len)


def overlap_sum(w: np.ndarray, hop: int) -> np.ndarray:
    """Steady-state sum of ``w`` shifted by multiples of ``hop`` (one period)."""
    acc = np.zeros(hop)
    for start in range(0, w.size, hop):
        acc += w[start:start + hop]
    return acc


@dataclass(frozen=True)
class StftConfig:
    frame_len: int = 1024
    hop: int = 256
    window: Window = Window.HANN

    def __post_init__(self):
        object.__setattr__(self, "window", Window(self.window))
        n, hop = self.frame_len, self.hop
        if n <= 0 or n & (n - 1):
            raise ValueError(f"frame_len must be a power of two, got {n}")
        if hop <= 0 or hop > n or n % hop:
            raise ValueError(f"hop must divide frame_len, got hop={hop}, frame_len={n}")
        if self.window is Window.HANN and hop > n // 2:
            raise ValueError("Hann window needs hop <= frame_len / 2 for overlap-add")

    @property
    def n_bins(self) -> int:
        return self.frame_len // 2 + 1

    def window_values(self) -> np.ndarray:
        return window_values(self.window, self.frame_len)

    def is_cola(self, tol: float = 1e-12) -> bool:
        s = overlap_sum(self.window_values(), self.hop)
        return bool(np.ptp(s) <= tol * max(1.0, abs(s).max()))

    def analysis_window(self) -> np.ndarray:
        # scaled so the squared window overlap-adds to one (tight frame)
        w = self.window_values()
        return w / np.sqrt(overlap_sum(w * w, self.hop).mean())


@dataclass(frozen=True, eq=False)
class Spectrogram:
    bins: np.ndarray  # (frames, frame_len // 2 + 1) complex
    config: StftConfig
    origin_len: int

    @property
    def shape(self):
        return self.bins.shape


def bin_weights(frame_len: int) -> np.ndarray:
    """Multiplicity of each half-spectrum bin in the full DFT."""
    w = np.full(frame_len // 2 + 1, 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    return w


def spectral_energy(bins: np.ndarray) -> float:
    """Energy of half-spectrum coefficients counted over the full DFT."""
    n = 2 * (bins.shape[-1] - 1)
    return float(np.sum(bin_weights(n) * np.abs(bins) ** 2))


def _n_frames(padded_len: int, cfg: StftConfig) -> int:
    return max(1, -(-(padded_len - cfg.frame_len) // cfg.hop) + 1)


def _pad(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    half = cfg.frame_len // 2
    if cfg.window is Window.RECTANGULAR and cfg.hop == cfg.frame_len:
        # non-overlapping frames tile the signal directly
        n_frames = max(1, -(-x.size // cfg.frame_len))
        return np.pad(x, (0, n_frames * cfg.frame_len - x.size))
    mode = "reflect" if x.size > half else "constant"
    xp = np.pad(x, (half, half), mode=mode)
    n_frames = _n_frames(xp.size, cfg)
    total = (n_frames - 1) * cfg.hop + cfg.frame_len
    return np.pad(xp, (0, total - xp.size))


def _offset(cfg: StftConfig) -> int:
    if cfg.window is Window.RECTANGULAR and cfg.hop == cfg.frame_len:
        return 0
    return cfg.frame_len // 2


def stft(sig: Signal | np.ndarray, cfg: StftConfig = StftConfig()) -> Spectrogram:
    x = sig.samples if isinstance(sig, Signal) else np.asarray(sig, dtype=np.float64)
    xp = _pad(x, cfg)
    frames = np.lib.stride_tricks.sliding_window_view(xp, cfg.frame_len)[::cfg.hop]
    bins = np.fft.rfft(frames * cfg.analysis_window(), axis=-1, norm="ortho")
    return Spectrogram(bins, cfg, x.size)


def istft(spec: Spectrogram, sample_rate: int = 16000) -> Signal:
    """Weighted overlap-add inverse of :func:`stft`."""
    cfg = spec.config
    if not cfg.is_cola(1e-9):
        raise ValueError("configuration does not satisfy constant overlap-add")
    w = cfg.analysis_window()
    frames = np.fft.irfft(spec.bins, n=cfg.frame_len, axis=-1, norm="ortho") * w
    n_frames = frames.shape[0]
    total = (n_frames - 1) * cfg.hop + cfg.frame_len
    out = np.zeros(total)
    env = np.zeros(total)
    for i in range(n_frames):
        sl = slice(i * cfg.hop, i * cfg.hop + cfg.frame_len)
        out[sl] += frames[i]
        env[sl] += w * w
    off = _offset(cfg)
    out = out[off:off + spec.origin_len]
    env = env[off:off + spec.origin_len]
    nz = env > 1e-10
    out[nz] /= env[nz]
    out[~nz] = 0.0
    return Signal(out, sample_rate)
