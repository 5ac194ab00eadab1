"""Distortion synthesis, declipping (A-SPADE, ratio-mask oracle, a small
neural declipper) and evaluation utilities."""

__version__ = "0.1.0"

from .signal import Signal, read_wav, resample, write_wav  # noqa: E402

__all__ = ["Signal", "read_wav", "resample", "write_wav", "__version__"]
