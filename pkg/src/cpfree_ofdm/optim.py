"""Adaptive-moment (Adam) updates for dictionaries of numpy arrays."""

from __future__ import annotations

import numpy as np


class Adam:
    def __init__(self, lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """Update ``params`` in place."""
        if self.lr == 0:
            return
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(params[k])
                self.v[k] = np.zeros_like(params[k])
            self.m[k] *= self.beta1
            self.m[k] += (1.0 - self.beta1) * g
            self.v[k] *= self.beta2
            self.v[k] += (1.0 - self.beta2) * (g * g)
            params[k] -= (self.lr / bc1) * self.m[k] / (np.sqrt(self.v[k] / bc2) + self.eps)


class TrainingDiverged(RuntimeError):
    pass


class DivergenceMonitor:
    """Flags a run once the loss exceeds ``factor`` times its initial value for ``patience`` epochs in a row."""

    def __init__(self, initial: float, factor: float = 10.0, patience: int = 3):
        self.initial = initial
        self.factor = factor
        self.patience = patience
        self.strikes = 0

    def update(self, loss: float, epoch: int) -> None:
        if not np.isfinite(loss) or loss > self.factor * self.initial:
            self.strikes += 1
        else:
            self.strikes = 0
        if self.strikes >= self.patience:
            raise TrainingDiverged(
                f"loss {loss:.4g} above {self.factor}x initial {self.initial:.4g} "
                f"for {self.patience} consecutive epochs (epoch {epoch})")
