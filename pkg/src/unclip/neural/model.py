"""Small time-domain encoder/decoder with hand-written reverse-mode gradients.

The network is a 1-D U-Net: strided convolutions halve the length at each
encoder level, the decoder upsamples by repetition and concatenates the
level-matched encoder activations, and a linear 1x1 head produces the output.
With ``residual_output`` the head is added to the input.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np


@dataclass(frozen=True)
class ModelSpec:
    channels: tuple[int, ...] = (16, 32, 64)
    kernel_len: int = 15
    slope: float = 0.2
    residual_output: bool = True

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if self.kernel_len % 2 == 0:
            raise ValueError("kernel_len must be odd")
        if not self.channels:
            raise ValueError("at least one level is required")

    @property
    def levels(self) -> int:
        return len(self.channels)

    @property
    def stride(self) -> int:
        return 2 ** self.levels

    def layers(self) -> list[tuple[str, int, int, int, int]]:
        """``(name, in_channels, out_channels, kernel, stride)`` in declaration order."""
        k, ch = self.kernel_len, self.channels
        out = []
        for i, c in enumerate(ch):
            out.append((f"enc{i}", 1 if i == 0 else ch[i - 1], c, k, 2))
        out.append(("mid", ch[-1], ch[-1], k, 1))
        up = ch[-1]
        for i in reversed(range(self.levels)):
            skip = ch[i - 1] if i > 0 else 1
            c = ch[i - 1] if i > 0 else ch[0]
            out.append((f"dec{i}", up + skip, c, k, 1))
            up = c
        out.append(("head", ch[0], 1, 1, 1))
        return out

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ModelParams:
    spec: ModelSpec
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def names(self) -> list[str]:
        names = []
        for name, *_ in self.spec.layers():
            names += [f"{name}.weight", f"{name}.bias"]
        return names

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(self.spec, {k: v.astype(dtype) for k, v in self.tensors.items()})

    def copy(self) -> "ModelParams":
        return ModelParams(self.spec, {k: v.copy() for k, v in self.tensors.items()})

    @property
    def n_params(self) -> int:
        return int(sum(v.size for v in self.tensors.values()))

    @property
    def dtype(self):
        return next(iter(self.tensors.values())).dtype


def init_params(spec: ModelSpec, seed: int = 0, dtype=np.float64) -> ModelParams:
    """He-style random weights, zero biases, zero head."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, cin, cout, k, _ in spec.layers():
        if name == "head":
            w = np.zeros((cout, cin, k))
        else:
            gain = np.sqrt(2.0 / (1.0 + spec.slope ** 2))
            w = rng.normal(0.0, gain / np.sqrt(cin * k), size=(cout, cin, k))
        tensors[f"{name}.weight"] = w.astype(dtype)
        tensors[f"{name}.bias"] = np.zeros(cout, dtype=dtype)
    return ModelParams(spec, tensors)


# --- primitive layers -------------------------------------------------------

def _unfold(x, k, stride):
    # (B, C, L) -> (B, K * C, L_out), tap-major so each tap is one contiguous block
    pad = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    n_out = -(-x.shape[-1] // stride)
    cols = np.stack([xp[:, :, j:j + stride * n_out:stride] for j in range(k)], axis=1)
    return cols.reshape(x.shape[0], -1, n_out)


def conv1d(x, w, b, stride):
    """'Same'-padded strided convolution. x: (B, C, L), w: (O, C, K).

    Returns the output and the unfolded input kept for the backward pass.
    """
    cols = _unfold(x, w.shape[-1], stride)
    wm = w.transpose(0, 2, 1).reshape(w.shape[0], -1)
    return np.matmul(wm, cols) + b[:, None], cols


def conv1d_backward(g, cols, w, stride, length):
    o, c, k = w.shape
    bsz, _, n_out = g.shape
    wm = w.transpose(0, 2, 1).reshape(o, -1)
    dwm = np.matmul(g, cols.transpose(0, 2, 1)).sum(axis=0)
    dw = np.ascontiguousarray(dwm.reshape(o, k, c).transpose(0, 2, 1))
    db = g.sum(axis=(0, 2))
    dcols = np.matmul(wm.T, g).reshape(bsz, k, c, n_out)
    pad = k // 2
    dxp = np.zeros((bsz, c, length + 2 * pad), dtype=g.dtype)
    for j in range(k):
        dxp[:, :, j:j + stride * n_out:stride] += dcols[:, j]
    return dxp[:, :, pad:pad + length], dw, db


def leaky(x, slope):
    return np.where(x > 0, x, slope * x)


def leaky_backward(g, pre, slope):
    return np.where(pre > 0, g, slope * g)


def upsample(x):
    return np.repeat(x, 2, axis=-1)


def upsample_backward(g):
    return g.reshape(g.shape[0], g.shape[1], -1, 2).sum(axis=-1)


# --- network ----------------------------------------------------------------

def _as_batch(x):
    x = np.asarray(x)
    return (x[None, None, :], True) if x.ndim == 1 else (x[:, None, :], False)


def check_length(spec: ModelSpec, n: int) -> None:
    if n % spec.stride:
        raise ValueError(f"input length {n} is not divisible by {spec.stride}")


def forward_cached(params: ModelParams, x):
    spec = params.spec
    t = params.tensors
    h, single = _as_batch(x)
    h = h.astype(params.dtype, copy=False)
    check_length(spec, h.shape[-1])
    cache = {"input": h, "single": single}
    skips = [h]
    for name, _, _, _, stride in spec.layers():
        if name.startswith("enc") or name == "mid":
            pre, xp = conv1d(h, t[f"{name}.weight"], t[f"{name}.bias"], stride)
            cache[name] = (xp, pre, h.shape[-1])
            h = leaky(pre, spec.slope)
            if name.startswith("enc"):
                skips.append(h)
        elif name.startswith("dec"):
            level = int(name[3:])
            u = np.concatenate([upsample(h), skips[level]], axis=1)
            pre, xp = conv1d(u, t[f"{name}.weight"], t[f"{name}.bias"], stride)
            cache[name] = (xp, pre, u.shape[-1], h.shape[1])
            h = leaky(pre, spec.slope)
        else:
            out, xp = conv1d(h, t["head.weight"], t["head.bias"], 1)
            cache["head"] = (xp, h.shape[-1])
    if spec.residual_output:
        out = cache["input"] + out
    y = out[:, 0, :]
    return (y[0] if single else y), cache


def forward(params: ModelParams, x) -> np.ndarray:
    """Run the network on one segment ``(L,)`` or a batch ``(B, L)``."""
    return forward_cached(params, x)[0]


def backward_cached(params: ModelParams, cache, grad_out):
    """Gradients of ``sum(grad_out * forward(x))`` w.r.t. parameters and input."""
    spec = params.spec
    t = params.tensors
    g = np.asarray(grad_out, dtype=params.dtype)
    g = g[None, None, :] if cache["single"] else g[:, None, :]
    if g.shape != cache["input"].shape:
        raise ValueError("grad_out does not match the forward output shape")
    grads = {}
    g_in = g.copy() if spec.residual_output else np.zeros_like(g)
    xp, length = cache["head"]
    gh, grads["head.weight"], grads["head.bias"] = conv1d_backward(g, xp, t["head.weight"], 1, length)

    skip_grads = {}
    for name, _, _, _, stride in reversed(spec.layers()[:-1]):
        if name.startswith("dec"):
            level = int(name[3:])
            xp, pre, length, up_ch = cache[name]
            gp = leaky_backward(gh, pre, spec.slope)
            gu, grads[f"{name}.weight"], grads[f"{name}.bias"] = conv1d_backward(
                gp, xp, t[f"{name}.weight"], stride, length)
            skip_grads[level] = gu[:, up_ch:]
            gh = upsample_backward(gu[:, :up_ch])
        else:
            xp, pre, length = cache[name]
            if name.startswith("enc"):
                # activation of enc{i} feeds the decoder at level i + 1
                gh = gh + skip_grads.pop(int(name[3:]) + 1, 0.0)
            gp = leaky_backward(gh, pre, spec.slope)
            gh, grads[f"{name}.weight"], grads[f"{name}.bias"] = conv1d_backward(
                gp, xp, t[f"{name}.weight"], stride, length)
    g_in = g_in + gh + skip_grads.pop(0)
    g_in = g_in[0, 0] if cache["single"] else g_in[:, 0, :]
    return grads, g_in


def backward(params: ModelParams, x, grad_out) -> dict[str, np.ndarray]:
    _, cache = forward_cached(params, x)
    return backward_cached(params, cache, grad_out)[0]


# --- receptive field --------------------------------------------------------

def influence(spec: ModelSpec, position: int) -> tuple[int, int]:
    """Output interval affected by one input sample (unbounded signal)."""
    def conv(iv, k, s):
        a, b = iv
        p = k // 2
        return (-(-(a - k + 1 + p) // s), (b + p) // s)

    def hull(*ivs):
        return (min(i[0] for i in ivs), max(i[1] for i in ivs))

    h = (position, position)
    acts = [h]
    for name, _, _, k, s in spec.layers():
        if name.startswith("enc"):
            h = conv(h, k, s)
            acts.append(h)
        elif name == "mid":
            h = conv(h, k, s)
        elif name.startswith("dec"):
            level = int(name[3:])
            h = conv(hull((2 * h[0], 2 * h[1] + 1), acts[level]), k, s)
        else:
            h = conv(h, k, s)
    if spec.residual_output:
        h = hull(h, (position, position))
    return h


def receptive_field(spec: ModelSpec) -> int:
    """Widest span of outputs touched by a single input sample."""
    base = 1 << 20
    return max(b - a + 1 for a, b in (influence(spec, base + r) for r in range(spec.stride)))
