"""Distortion synthesis: gain, wave-shaping and dry/wet blending."""
from __future__ import annotations

import enum
from dataclasses import asdict, dataclass

import numpy as np
from scipy.signal import lfilter

from .signal import Signal


class EffectKind(str, enum.Enum):
    HARD_CLIP = "hardclip"
    TANH_CLIP = "tanh"
    SOX_OVERDRIVE = "overdrive"


@dataclass(frozen=True)
class DistortionSpec:
    kind: EffectKind = EffectKind.HARD_CLIP
    gain_db: float = 0.0
    clip_threshold: float = 1.0
    wet_weight: float = 1.0
    colour: float = 20.0

    def __post_init__(self):
        object.__setattr__(self, "kind", EffectKind(self.kind))
        if not self.clip_threshold > 0:
            raise ValueError("clip_threshold must be positive")
        if not 0.0 <= self.wet_weight <= 1.0:
            raise ValueError("wet_weight must lie in [0, 1]")
        if self.colour < 0:
            raise ValueError("colour must be nonnegative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d


def db_to_gain(gain_db: float) -> float:
    return 10.0 ** (gain_db / 20.0)


def amplify(x: Signal, gain_db: float) -> Signal:
    if gain_db == 0:
        return x
    return x.with_samples(x.samples * db_to_gain(gain_db))


def hard_clip_samples(v: np.ndarray, theta: float) -> np.ndarray:
    return np.clip(v, -theta, theta)


def hard_clip(x: Signal, spec: DistortionSpec) -> Signal:
    xg = amplify(x, spec.gain_db).samples
    return x.with_samples(hard_clip_samples(xg, spec.clip_threshold))


def tanh_clip(x: Signal, spec: DistortionSpec) -> Signal:
    theta = spec.clip_threshold
    xg = amplify(x, spec.gain_db).samples
    return x.with_samples(theta * np.tanh(xg / theta))


# Constants of the SoX overdrive effect (effects/overdrive.c).
SOX_DRY_GAIN = 0.5
SOX_WET_GAIN = 0.75
SOX_DC_POLE = 0.995


def sox_cubic(v: np.ndarray) -> np.ndarray:
    """Cubic soft clipper: v - v**3/3 inside [-1, 1], +-2/3 outside."""
    out = v - v * v * v / 3.0
    out = np.where(v > 1.0, 2.0 / 3.0, out)
    return np.where(v < -1.0, -2.0 / 3.0, out)


def sox_overdrive(x: Signal, spec: DistortionSpec, wet: bool = True) -> Signal:
    """Emulate ``sox overdrive <gain_db> <colour>``.

    The wet path is gain, a colour bias of ``colour / 200``, the cubic
    clipper and a one-pole DC blocker; the output is
    ``0.5 * dry + 0.75 * wet`` clamped to full scale. ``wet=False`` drops the
    wet path and leaves only the dry contribution.
    """
    d0 = x.samples
    if spec.gain_db == 0:
        # SoX treats unity gain as a null effect
        return x
    shaped = sox_cubic(d0 * db_to_gain(spec.gain_db) + spec.colour / 200.0)
    # last_out = d - last_in + 0.995 * last_out
    blocked = lfilter([1.0, -1.0], [1.0, -SOX_DC_POLE], shaped)
    out = SOX_DRY_GAIN * d0
    if wet:
        out = out + SOX_WET_GAIN * blocked
    return x.with_samples(np.clip(out, -1.0, 1.0))


def blend(dry: Signal, wet: Signal, alpha: float) -> Signal:
    """Convex dry/wet mix ``alpha * wet + (1 - alpha) * dry``."""
    if len(dry) != len(wet) or dry.sample_rate != wet.sample_rate:
        raise ValueError("dry and wet signals must share length and sample rate")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if alpha == 0.0:
        return dry
    if alpha == 1.0:
        return wet
    mixed = alpha * wet.samples + (1.0 - alpha) * dry.samples
    # rounding must not push the mix outside the segment [dry, wet]
    lo = np.minimum(dry.samples, wet.samples)
    hi = np.maximum(dry.samples, wet.samples)
    return dry.with_samples(np.clip(mixed, lo, hi))


_SHAPERS = {
    EffectKind.HARD_CLIP: hard_clip,
    EffectKind.TANH_CLIP: tanh_clip,
}


def apply(x: Signal, spec: DistortionSpec) -> Signal:
    if spec.kind is EffectKind.SOX_OVERDRIVE:
        return sox_overdrive(x, spec)
    if spec.wet_weight == 0.0:
        return x
    wet = _SHAPERS[spec.kind](x, spec)
    return blend(x, wet, spec.wet_weight)
