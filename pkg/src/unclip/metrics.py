"""SDR, scale-invariant SDR and input-SDR targeting."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .signal import Signal

EPS_NUM = 1e-12
CAP_DB = 200.0
# residual energy this far below the signal is rounding noise, i.e. zero
VANISHING = 1e-24


class MetricKind(str, enum.Enum):
    SDR = "sdr"
    SISDR = "si_sdr"


@dataclass(frozen=True)
class MetricValue:
    value: float
    kind: MetricKind
    flag: str | None = None

    def __float__(self) -> float:
        return self.value


def _arrays(reference, estimate):
    x = reference.samples if isinstance(reference, Signal) else np.asarray(reference, dtype=np.float64)
    y = estimate.samples if isinstance(estimate, Signal) else np.asarray(estimate, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if isinstance(reference, Signal) and isinstance(estimate, Signal):
        if reference.sample_rate != estimate.sample_rate:
            raise ValueError("sample rate mismatch")
    return x, y


def _ratio_db(num: float, den: float) -> float:
    if den <= VANISHING * num:
        return CAP_DB
    return float(np.clip(10.0 * math.log10(num / (den + EPS_NUM)), -CAP_DB, CAP_DB))


def sdr_value(x: np.ndarray, xh: np.ndarray) -> float:
    px = float(np.dot(x, x))
    if px == 0.0:
        raise ValueError("reference is all zero")
    r = x - xh
    return _ratio_db(px, float(np.dot(r, r)))


def sdr(reference, estimate) -> MetricValue:
    """Plain source-to-distortion ratio ``10 log10(|x|^2 / |x - x_hat|^2)``."""
    x, y = _arrays(reference, estimate)
    return MetricValue(sdr_value(x, y), MetricKind.SDR)


def si_sdr(reference, estimate) -> MetricValue:
    s, sh = _arrays(reference, estimate)
    ps = float(np.dot(s, s))
    if ps == 0.0:
        raise ValueError("reference is all zero")
    dot = float(np.dot(sh, s))
    if dot == 0.0:
        return MetricValue(-CAP_DB, MetricKind.SISDR, flag="orthogonal")
    target = (dot / ps) * s
    r = target - sh
    return MetricValue(_ratio_db(float(np.dot(target, target)), float(np.dot(r, r))), MetricKind.SISDR)


def batch_sdr_loss(refs, ests) -> float:
    """Negative mean SDR over a batch (the training objective)."""
    refs, ests = list(refs), list(ests)
    if not refs:
        raise ValueError("empty batch")
    if len(refs) != len(ests):
        raise ValueError("batch sizes differ")
    vals = [sdr(r, e).value for r, e in zip(refs, ests)]
    return -float(np.mean(vals))


@dataclass(frozen=True)
class ThresholdSolution:
    theta: float
    achieved_db: float
    iterations: int
    converged: bool


def solve_threshold_for_target_sdr(x, target_db: float, tol_db: float = 0.05,
                                   max_iter: int = 60) -> ThresholdSolution:
    """Bisect the clipping level so that ``sdr(x, clip(x, theta))`` hits ``target_db``.

    Clipping is applied to ``x`` directly with no gain stage, so the clipped
    signal stays on the reference's scale.
    """
    v = x.samples if isinstance(x, Signal) else np.asarray(x, dtype=np.float64)
    peak = float(np.max(np.abs(v))) if v.size else 0.0
    if peak == 0.0:
        raise ValueError("cannot target an SDR on an all-zero signal")
    if target_db >= CAP_DB:
        # only the unclipped signal reaches the cap
        return ThresholdSolution(peak, CAP_DB, 0, True)
    if not 0.0 < target_db <= 60.0:
        raise ValueError("target must lie in (0, 60] dB")

    def measure(theta):
        return sdr_value(v, np.clip(v, -theta, theta))

    lo, hi = 0.0, peak
    best = (peak, CAP_DB)
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        got = measure(mid)
        if abs(got - target_db) < abs(best[1] - target_db):
            best = (mid, got)
        if abs(got - target_db) <= tol_db:
            return ThresholdSolution(mid, got, it, True)
        # SDR is nondecreasing in theta
        if got < target_db:
            lo = mid
        else:
            hi = mid
    return ThresholdSolution(best[0], best[1], max_iter, False)
