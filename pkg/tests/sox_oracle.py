"""Scalar transcription of the SoX ``overdrive`` sample loop (effects/overdrive.c).

Kept deliberately naive: one sample at a time, mirroring the C state
variables, so it shares no code path with the vectorized implementation.
"""
import math


def overdrive(samples, gain_db, colour):
    gain = math.exp(gain_db / 20.0 * math.log(10.0))
    colour = colour / 200.0
    last_in = 0.0
    last_out = 0.0
    out = []
    for d0 in samples:
        d = d0 * gain + colour
        if d < -1:
            d = -2.0 / 3
        elif d > 1:
            d = 2.0 / 3
        else:
            d = d - d * d * d * (1.0 / 3)
        last_out = d - last_in + 0.995 * last_out
        last_in = d
        o = d0 * 0.5 + last_out * 0.75
        out.append(min(1.0, max(-1.0, o)))
    return out
