"""Binary model files.

Layout (little-endian)::

    b"UNCL"                      magic
    u16 version
    u16 levels, u16 kernel_len, u8 residual_output, f64 slope
    u16 channels[levels]
    f32 tensors, layer declaration order, weight then bias, C order
    u32 CRC-32 of everything above
"""
from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .model import ModelParams, ModelSpec

MAGIC = b"UNCL"
VERSION = 1


class ModelFileError(ValueError):
    pass


def _shapes(spec: ModelSpec):
    for name, cin, cout, k, _ in spec.layers():
        yield f"{name}.weight", (cout, cin, k)
        yield f"{name}.bias", (cout,)


def dumps(params: ModelParams) -> bytes:
    spec = params.spec
    parts = [
        MAGIC,
        struct.pack("<H", VERSION),
        struct.pack("<HHBd", spec.levels, spec.kernel_len, int(spec.residual_output), spec.slope),
        struct.pack(f"<{spec.levels}H", *spec.channels),
    ]
    for name, shape in _shapes(spec):
        t = params.tensors[name]
        if t.shape != shape:
            raise ModelFileError(f"{name} has shape {t.shape}, expected {shape}")
        parts.append(np.ascontiguousarray(t, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def loads(data: bytes) -> ModelParams:
    if len(data) < 4 + 2 + 13 + 4 or data[:4] != MAGIC:
        raise ModelFileError("not a model file (bad magic)")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise ModelFileError("checksum mismatch")
    try:
        return _parse(body)
    except (struct.error, ValueError) as exc:
        if isinstance(exc, ModelFileError):
            raise
        raise ModelFileError(f"malformed model file: {exc}") from exc


def _parse(body: bytes) -> ModelParams:
    (version,) = struct.unpack_from("<H", body, 4)
    if version != VERSION:
        raise ModelFileError(f"unsupported model file version {version}")
    levels, kernel_len, residual, slope = struct.unpack_from("<HHBd", body, 6)
    off = 6 + struct.calcsize("<HHBd")
    channels = struct.unpack_from(f"<{levels}H", body, off)
    off += 2 * levels
    spec = ModelSpec(tuple(channels), kernel_len, slope, bool(residual))
    tensors = {}
    for name, shape in _shapes(spec):
        n = int(np.prod(shape))
        arr = np.frombuffer(body, dtype="<f4", count=n, offset=off)
        tensors[name] = arr.reshape(shape).astype(np.float32)
        off += 4 * n
    if off != len(body):
        raise ModelFileError("trailing bytes after tensors")
    return ModelParams(spec, tensors)


def save_model(params: ModelParams, path) -> None:
    Path(path).write_bytes(dumps(params))


def load_model(path) -> ModelParams:
    return loads(Path(path).read_bytes())
