"""Clipping-consistency sets: detection of clipped samples and projection."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .signal import Signal

PCM16_SLACK = 2.0 ** -12


class Label(enum.IntEnum):
    RELIABLE = 0
    CLIPPED_HIGH = 1
    CLIPPED_LOW = -1


@dataclass(frozen=True, eq=False)
class ReliabilityMask:
    labels: np.ndarray  # int8 array of Label values
    threshold: float

    def __len__(self) -> int:
        return self.labels.size

    @property
    def reliable(self) -> np.ndarray:
        return self.labels == Label.RELIABLE

    @property
    def high(self) -> np.ndarray:
        return self.labels == Label.CLIPPED_HIGH

    @property
    def low(self) -> np.ndarray:
        return self.labels == Label.CLIPPED_LOW

    @property
    def n_clipped(self) -> int:
        return int(np.count_nonzero(self.labels))

    def __getitem__(self, sl) -> "ReliabilityMask":
        return ReliabilityMask(self.labels[sl], self.threshold)


def estimate_threshold(y: Signal | np.ndarray, slack: float = 0.0, min_run: int = 3) -> float | None:
    """Guess the clipping level of ``y`` when the true threshold is unknown.

    The candidate is ``max|y|``; it is accepted only if some run of at least
    ``min_run`` consecutive samples sits on it (a sampled sinusoid never holds
    its peak for three samples). Returns ``None`` when no plateau is found.
    """
    v = y.samples if isinstance(y, Signal) else np.asarray(y, dtype=np.float64)
    if v.size == 0:
        return None
    peak = float(np.max(np.abs(v)))
    if peak == 0.0:
        return None
    hit = np.abs(v) >= peak * (1.0 - slack)
    signs = np.sign(v) * hit
    same = ((signs[:-1] == signs[1:]) & (signs[:-1] != 0)).astype(np.int64)
    if same.size < min_run - 1:
        return None
    runs = np.convolve(same, np.ones(min_run - 1, dtype=np.int64), mode="valid")
    return peak if runs.max(initial=0) >= min_run - 1 else None


def detect(y: Signal | np.ndarray, theta_c: float, slack: float = 0.0) -> ReliabilityMask:
    """Label samples at or beyond ``theta_c * (1 - slack)`` as clipped."""
    if not theta_c > 0:
        raise ValueError("theta_c must be positive")
    v = y.samples if isinstance(y, Signal) else np.asarray(y, dtype=np.float64)
    bound = theta_c * (1.0 - slack)
    labels = np.zeros(v.size, dtype=np.int8)
    labels[v >= bound] = Label.CLIPPED_HIGH
    labels[v <= -bound] = Label.CLIPPED_LOW
    return ReliabilityMask(labels, float(theta_c))


def feasible_bounds(y: np.ndarray, mask: ReliabilityMask, scale=None, theta=None):
    """Per-sample box ``[lo, hi]`` describing the consistency set.

    Reliable samples are pinned to ``scale * y``; clipped samples must reach at
    least ``scale * theta`` in the observed direction. Positions whose scale is
    below 1e-6 carry no usable constraint and are treated as reliable.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.size != len(mask):
        raise ValueError("mask and signal lengths differ")
    theta = mask.threshold if theta is None else theta
    scale = np.ones(y.size) if scale is None else np.asarray(scale, dtype=np.float64)
    if scale.size != y.size:
        raise ValueError("scale and signal lengths differ")
    target = scale * y
    lo = np.full(y.size, -np.inf)
    hi = np.full(y.size, np.inf)
    high = mask.high & (scale >= 1e-6)
    low = mask.low & (scale >= 1e-6)
    pinned = ~(high | low)
    lo[pinned] = target[pinned]
    hi[pinned] = target[pinned]
    lo[high] = scale[high] * theta
    hi[low] = -scale[low] * theta
    return lo, hi


def project(v, y, mask: ReliabilityMask, scale=None) -> np.ndarray:
    """Euclidean projection of ``v`` onto the clipping-consistent set of ``y``."""
    v = np.asarray(v, dtype=np.float64)
    y = y.samples if isinstance(y, Signal) else y
    if v.size != len(mask):
        raise ValueError("length mismatch between v and mask")
    lo, hi = feasible_bounds(y, mask, scale)
    return np.minimum(np.maximum(v, lo), hi)
