"""Trainable parameter blocks, He initialization and the Adam update."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, TrainingError

__all__ = ["ParamBlock", "he_init", "adam_step"]


@dataclass
class ParamBlock:
    """One named tensor with its gradient and Adam state.

    ``t`` is the per-block Adam step counter, incremented before bias
    correction on every update.
    """

    name: str
    value: np.ndarray
    grad: np.ndarray = field(default=None)
    m: np.ndarray = field(default=None)
    v: np.ndarray = field(default=None)
    t: int = 0

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.m is None:
            self.m = np.zeros_like(self.value)
        if self.v is None:
            self.v = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad[...] = 0.0

    def copy(self):
        blk = ParamBlock(self.name, self.value.copy(), self.grad.copy(), self.m.copy(), self.v.copy(), self.t)
        return blk


def he_init(fan_in, shape, rng):
    """Gaussian He initialization: zero mean, variance 2 / fan_in."""
    if fan_in < 1:
        raise ConfigError(f"he_init fan_in must be >= 1, got {fan_in}")
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def adam_step(block, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Apply one Adam update to a block in place.

    Raises TrainingError naming the block if its gradient is non-finite; the
    block is left untouched in that case.
    """
    grad = block.grad
    if not np.all(np.isfinite(grad)):
        raise TrainingError(f"non-finite gradient in parameter block '{block.name}'")
    block.t += 1
    block.m *= beta1
    block.m += (1.0 - beta1) * grad
    block.v *= beta2
    block.v += (1.0 - beta2) * grad * grad
    m_hat = block.m / (1.0 - beta1**block.t)
    v_hat = block.v / (1.0 - beta2**block.t)
    block.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
