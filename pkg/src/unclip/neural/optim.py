"""Adam with bias correction and a reduce-on-plateau learning-rate rule."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              lr: float, betas=(0.9, 0.999), eps: float = 1e-8) -> tuple[dict, AdamState]:
    """One Adam update. Inputs are left untouched; new params and state are returned."""
    b1, b2 = betas
    t = state.step + 1
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    new_params, m_new, v_new = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        elif m.shape != p.shape:
            raise ValueError(f"optimizer state for {name} has shape {m.shape}, expected {p.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        m_new[name] = m
        v_new[name] = v
        new_params[name] = (p - lr * (m / bc1) / (np.sqrt(v / bc2) + eps)).astype(p.dtype, copy=False)
    return new_params, AdamState(t, m_new, v_new)


class PlateauSchedule:
    """Divide the learning rate by ``factor`` after ``patience`` epochs without a new minimum."""

    def __init__(self, lr: float, patience: int, factor: float = 10.0):
        self.lr = lr
        self.patience = patience
        self.factor = factor
        self.best = np.inf
        self.bad_epochs = 0

    def step(self, loss: float) -> float:
        if loss < self.best:
            self.best = loss
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                self.lr /= self.factor
                self.bad_epochs = 0
        return self.lr
