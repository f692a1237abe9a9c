"""Adam with bias correction and a one-shot step decay of the learning rate."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from ..errors import NumericsError
from .layers import Param


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    decay_factor: float = 0.1
    decay_epoch: int = 50

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")

    def lr_at(self, epoch: int) -> float:
        """Learning rate for a 1-based epoch: decayed once ``epoch > decay_epoch``."""
        if epoch > self.decay_epoch:
            return self.learning_rate * self.decay_factor
        return self.learning_rate


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0


def adam_step(param: Param, state: AdamState, config: AdamConfig, epoch: int) -> None:
    """Apply one Adam update to ``param`` in place using ``param.grad``."""
    g = param.grad
    if not np.all(np.isfinite(g)):
        raise NumericsError(f"non-finite gradient for {param.name}")
    state.step += 1
    b1, b2 = config.beta1, config.beta2
    state.m = b1 * state.m + (1 - b1) * g
    state.v = b2 * state.v + (1 - b2) * (g * g)
    m_hat = state.m / (1 - b1 ** state.step)
    v_hat = state.v / (1 - b2 ** state.step)
    update = config.lr_at(epoch) * m_hat / (np.sqrt(v_hat) + config.epsilon)
    param.value -= update.astype(param.value.dtype, copy=False)


class Adam:
    """Adam over a fixed list of parameters, with its own moment estimates.

    Separate instances over overlapping parameter lists keep separate
    moments, which is how the training phases share the encoder.
    """

    def __init__(self, params: Sequence[Param], config: AdamConfig | None = None):
        self.params = list(params)
        self.config = config or AdamConfig()
        self.states = [
            AdamState(np.zeros_like(p.value), np.zeros_like(p.value)) for p in self.params
        ]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self, epoch: int) -> None:
        for p, s in zip(self.params, self.states):
            adam_step(p, s, self.config, epoch)

    def astype(self, dtype):
        for s in self.states:
            s.m = s.m.astype(dtype)
            s.v = s.v.astype(dtype)
