"""Analysis-sparsity declipping (A-SPADE).

Each frame alternates hard thresholding of its DFT coefficients with a
projection onto the clipping-consistent set; frames are then recombined by
weighted overlap-add and a final projection restores exact consistency.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .reliability import ReliabilityMask, detect, estimate_threshold, feasible_bounds, project
from .signal import Signal
from .stft import Window, bin_weights, window_values


@dataclass(frozen=True)
class AspadeConfig:
    frame_len: int = 1024
    hop: int = 256
    window: Window = Window.HANN
    sparsity_step: int = 1
    relax_every: int = 1
    epsilon: float = 0.1
    max_iter: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "window", Window(self.window))
        if self.max_iter is None:
            object.__setattr__(self, "max_iter", self.frame_len)
        if not 0 < self.hop <= self.frame_len:
            raise ValueError("hop must lie in (0, frame_len]")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.sparsity_step < 1 or self.relax_every < 1 or self.max_iter < 1:
            raise ValueError("sparsity_step, relax_every and max_iter must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = self.window.value
        return d


@dataclass
class FrameResult:
    samples: np.ndarray
    iterations: int
    residual: float
    converged: bool


@dataclass
class AspadeReport:
    iterations: list[int] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)
    converged: list[bool] = field(default_factory=list)
    n_clipped: int = 0
    violations: int = 0
    wall_time: float = 0.0
    rtf: float = 0.0

    def to_dict(self) -> dict:
        n = len(self.iterations)
        return {
            "frames": n,
            "frames_converged": int(sum(self.converged)),
            "iterations": self.iterations,
            "mean_iterations": float(np.mean(self.iterations)) if n else 0.0,
            "max_residual": float(max(self.residuals)) if n else 0.0,
            "residuals": self.residuals,
            "n_clipped": self.n_clipped,
            "violations": self.violations,
            "wall_time_s": self.wall_time,
            "rtf": self.rtf,
        }


def hard_threshold(coefs: np.ndarray, k: int) -> np.ndarray:
    """Keep the ``k`` largest half-spectrum coefficients, zero the rest.

    Each interior bin stands for a conjugate pair, so the pair is kept or
    dropped together; ties go to the lower frequency.
    """
    if k >= coefs.size:
        return coefs.copy()
    order = np.argsort(-np.abs(coefs), kind="stable")
    out = np.zeros_like(coefs)
    keep = order[:k]
    out[keep] = coefs[keep]
    return out


def _full_norm(c: np.ndarray, weights: np.ndarray) -> float:
    # norm of the full (two-sided) spectrum from its half
    return float(np.sqrt(np.sum(weights * (c.real ** 2 + c.imag ** 2))))


def _declip_box(lo: np.ndarray, hi: np.ndarray, start: np.ndarray, cfg: AspadeConfig) -> FrameResult:
    n = start.size
    weights = bin_weights(n)
    x = np.minimum(np.maximum(start, lo), hi)
    if np.array_equal(lo, hi):
        return FrameResult(x, 0, 0.0, True)
    u = np.zeros(n // 2 + 1, dtype=np.complex128)
    k = cfg.sparsity_step
    residual = np.inf
    it = 0
    for it in range(1, cfg.max_iter + 1):
        ax = np.fft.rfft(x, norm="ortho")
        z = hard_threshold(ax + u, k)
        x = np.fft.irfft(z - u, n=n, norm="ortho")
        x = np.minimum(np.maximum(x, lo), hi)
        ax = np.fft.rfft(x, norm="ortho")
        diff = ax - z
        residual = _full_norm(diff, weights)
        if residual <= cfg.epsilon:
            return FrameResult(x, it, residual, True)
        u = u + diff
        if it % cfg.relax_every == 0:
            k += cfg.sparsity_step
    return FrameResult(x, it, residual, False)


def declip_frame(y_frame, mask: ReliabilityMask, scale=None, cfg: AspadeConfig = AspadeConfig()) -> FrameResult:
    """Solve one frame.

    ``y_frame`` is the windowed observation, ``scale`` the window values used
    to window it (ones for a rectangular frame). Reliable samples are held at
    ``y_frame``; clipped ones must exceed ``scale * threshold``.
    """
    y_frame = np.asarray(y_frame, dtype=np.float64)
    n = y_frame.size
    scale = np.ones(n) if scale is None else np.asarray(scale, dtype=np.float64)
    lo, hi = feasible_bounds(y_frame, mask, np.ones(n))
    # bounds for clipped samples follow the window
    lo = np.where(mask.high & (scale >= 1e-6), scale * mask.threshold, lo)
    hi = np.where(mask.low & (scale >= 1e-6), -scale * mask.threshold, hi)
    weak = ~mask.reliable & (scale < 1e-6)
    lo[weak] = y_frame[weak]
    hi[weak] = y_frame[weak]
    return _declip_box(lo, hi, y_frame, cfg)


def declip_signal(y: Signal, theta_c: float | None = None, cfg: AspadeConfig = AspadeConfig(),
                  slack: float = 0.0, jobs: int = 1) -> tuple[Signal, AspadeReport]:
    """Declip a whole signal frame by frame and overlap-add the results.

    Without ``theta_c`` the clipping level is estimated from a plateau at the
    signal peak; a signal without one passes through unchanged.
    """
    if len(y) == 0:
        raise ValueError("cannot declip an empty signal")
    t0 = time.perf_counter()
    v = y.samples
    if theta_c is None:
        theta_c = estimate_threshold(v, slack)
    if theta_c is not None and not theta_c > 0:
        raise ValueError("theta_c must be positive")
    mask = detect(v, theta_c, slack) if theta_c is not None else None
    report = AspadeReport(n_clipped=mask.n_clipped if mask is not None else 0)
    if report.n_clipped == 0:
        report.wall_time = time.perf_counter() - t0
        report.rtf = report.wall_time / y.duration
        return y, report

    n, hop = cfg.frame_len, cfg.hop
    w = window_values(cfg.window, n)
    # zero padding so every sample sees the full set of overlapping frames
    pad_l = n - hop
    n_frames = -(-(v.size + 2 * pad_l - n) // hop) + 1
    total = (n_frames - 1) * hop + n
    vp = np.zeros(total)
    vp[pad_l:pad_l + v.size] = v
    labels = np.zeros(total, dtype=np.int8)
    labels[pad_l:pad_l + v.size] = mask.labels
    padded_mask = ReliabilityMask(labels, theta_c)

    def solve(i):
        sl = slice(i * hop, i * hop + n)
        return declip_frame(vp[sl] * w, padded_mask[sl], w, cfg)

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(solve, range(n_frames)))
    else:
        results = [solve(i) for i in range(n_frames)]

    # reduction in frame order keeps the sum independent of scheduling
    out = np.zeros(total)
    wsum = np.zeros(total)
    for i, res in enumerate(results):
        sl = slice(i * hop, i * hop + n)
        out[sl] += res.samples
        wsum[sl] += w
        report.iterations.append(res.iterations)
        report.residuals.append(res.residual)
        report.converged.append(res.converged)
    out = out[pad_l:pad_l + v.size] / wsum[pad_l:pad_l + v.size]
    out = project(out, v, mask)
    lo, hi = feasible_bounds(v, mask)
    report.violations = int(np.count_nonzero((out < lo - 1e-6) | (out > hi + 1e-6)))
    report.wall_time = time.perf_counter() - t0
    report.rtf = report.wall_time / y.duration
    return y.with_samples(out), report
