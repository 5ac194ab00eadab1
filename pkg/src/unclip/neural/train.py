"""Negative-SDR training loop, inference and real-time-factor measurement."""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from ..corpus import DatasetManifest
from ..metrics import CAP_DB, EPS_NUM, VANISHING
from ..signal import Signal, read_wav
from .model import ModelParams, ModelSpec, backward_cached, forward, forward_cached, init_params, receptive_field
from .optim import AdamState, PlateauSchedule, adam_step

log = logging.getLogger(__name__)

DB_PER_NEPER = 10.0 / math.log(10.0)


@dataclass(frozen=True)
class TrainConfig:
    segment_len: int = 32000
    batch_size: int = 16
    lr_init: float = 1e-3
    plateau_patience: int = 20
    max_epochs: int = 200
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.segment_len < 1:
            raise ValueError("segment_len must be positive")

    @classmethod
    def full(cls, **overrides) -> "TrainConfig":
        """Full protocol: LR/10 after 150 stale epochs, stop at 1000 epochs."""
        return cls(**{"plateau_patience": 150, "max_epochs": 1000, **overrides})


@dataclass
class EpochLog:
    epoch: int
    train_loss: float | None
    valid_loss: float
    lr: float


def sdr_and_grad(x: np.ndarray, xh: np.ndarray) -> tuple[float, np.ndarray]:
    """Per-item SDR and its gradient with respect to the estimate."""
    x = x.astype(np.float64)
    r = x - xh.astype(np.float64)
    px = float(np.dot(x, x))
    pr = float(np.dot(r, r))
    if px == 0.0:
        raise ValueError("reference is all zero")
    if pr <= VANISHING * px:
        return CAP_DB, np.zeros_like(r)
    val = DB_PER_NEPER * math.log(px / (pr + EPS_NUM))
    if abs(val) >= CAP_DB:
        return math.copysign(CAP_DB, val), np.zeros_like(r)
    # d/dxh of -10 log10(|x - xh|^2 + eps)
    return val, 2.0 * DB_PER_NEPER * r / (pr + EPS_NUM)


def loss_and_grad(params: ModelParams, clean_batch, degraded_batch):
    """Negative mean SDR of the network output and its parameter gradients."""
    clean = np.atleast_2d(np.asarray(clean_batch))
    degraded = np.atleast_2d(np.asarray(degraded_batch))
    if clean.shape != degraded.shape:
        raise ValueError("clean and degraded batches differ in shape")
    out, cache = forward_cached(params, degraded)
    # silent references have no SDR; they drop out of the mean
    live = [i for i in range(clean.shape[0]) if np.any(clean[i])]
    n = len(live)
    grad_out = np.zeros(out.shape)
    total = 0.0
    for i in live:
        val, g = sdr_and_grad(clean[i], out[i])
        total += val
        grad_out[i] = -g / n
    grads, _ = backward_cached(params, cache, grad_out)
    return (-total / n if n else 0.0), grads


def batch_loss(params: ModelParams, clean_batch, degraded_batch) -> float:
    out = forward(params, np.atleast_2d(degraded_batch))
    vals = [sdr_and_grad(c, o)[0] for c, o in zip(np.atleast_2d(clean_batch), out) if np.any(c)]
    return -float(np.mean(vals)) if vals else 0.0


def _load_pairs(manifest: DatasetManifest, split: str):
    pairs = []
    for e in manifest.with_split(split):
        clean = read_wav(manifest.resolve(e.clean_path)).samples
        degraded = read_wav(manifest.resolve(e.degraded_path)).samples
        pairs.append((clean, degraded))
    return pairs


def _fit_length(n: int, spec: ModelSpec) -> int:
    return n - n % spec.stride


def train(manifest: DatasetManifest, spec: ModelSpec = ModelSpec(), cfg: TrainConfig = TrainConfig(),
          init: ModelParams | None = None) -> tuple[ModelParams, list[EpochLog]]:
    """Train on the manifest's train split with plateau LR control.

    Returns the parameters with the lowest validation loss and one log row per
    epoch; row 0 is the untrained model's validation loss.
    """
    train_pairs = _load_pairs(manifest, "train")
    valid_pairs = _load_pairs(manifest, "valid")
    if not train_pairs or not valid_pairs:
        raise ValueError("manifest needs nonempty train and valid splits")
    seg = _fit_length(min(cfg.segment_len, min(c.size for c, _ in train_pairs + valid_pairs)), spec)
    if seg < receptive_field(spec) or seg == 0:
        raise ValueError(f"segment of {seg} samples is shorter than the receptive field")

    # fixed validation segments: centered in each clip
    vc, vd = [], []
    for c, d in valid_pairs:
        start = (c.size - seg) // 2
        vc.append(c[start:start + seg])
        vd.append(d[start:start + seg])
    vc, vd = np.stack(vc), np.stack(vd)

    dtype = np.dtype(cfg.dtype)
    params = (init if init is not None else init_params(spec, cfg.seed)).astype(dtype)
    rng = np.random.default_rng(cfg.seed)
    state = AdamState()
    sched = PlateauSchedule(cfg.lr_init, cfg.plateau_patience)

    def validate(p):
        return batch_loss(p.astype(np.float64), vc, vd)

    best_loss = validate(params)
    best = params.copy()
    history = [EpochLog(0, None, best_loss, sched.lr)]
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(train_pairs))
        starts = [int(rng.integers(0, train_pairs[i][0].size - seg + 1)) for i in order]
        losses = []
        for b in range(0, len(order), cfg.batch_size):
            idx = order[b:b + cfg.batch_size]
            st = starts[b:b + cfg.batch_size]
            cb = np.stack([train_pairs[i][0][s:s + seg] for i, s in zip(idx, st)]).astype(dtype)
            db = np.stack([train_pairs[i][1][s:s + seg] for i, s in zip(idx, st)]).astype(dtype)
            loss, grads = loss_and_grad(params, cb, db)
            tensors, state = adam_step(params.tensors, grads, state, sched.lr, cfg.betas, cfg.adam_eps)
            params = ModelParams(spec, tensors)
            losses.append(loss)
        valid = validate(params)
        if not np.isfinite(valid):
            raise FloatingPointError(f"validation loss diverged at epoch {epoch}")
        if valid < best_loss:
            best_loss, best = valid, params.copy()
        lr = sched.step(valid)
        history.append(EpochLog(epoch, float(np.mean(losses)), valid, lr))
        log.debug("epoch %d train %.4f valid %.4f lr %g", epoch, history[-1].train_loss, valid, lr)
    return best, history


def log_to_csv(history: list[EpochLog]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "train_loss", "valid_loss", "lr"])
    for row in history:
        tl = "" if row.train_loss is None else repr(float(row.train_loss))
        w.writerow([row.epoch, tl, repr(float(row.valid_loss)), repr(float(row.lr))])
    return buf.getvalue()


@dataclass
class InferenceResult:
    signal: Signal
    wall_time: float
    rtf: float


def infer(params: ModelParams, y: Signal) -> InferenceResult:
    """Reflect-pad to a multiple of the model stride, run the network, trim."""
    t0 = time.perf_counter()
    x = y.samples
    n = x.size
    stride = params.spec.stride
    pad = (-n) % stride
    if pad:
        mode = "reflect" if n > pad else "edge"
        x = np.pad(x, (0, pad), mode=mode)
    # float32 weights are exact in float64, which keeps an identity model exact
    out = forward(params.astype(np.float64), x)[:n]
    wall = time.perf_counter() - t0
    return InferenceResult(y.with_samples(out), wall, wall / y.duration)
