"""Adam with decoupled weight decay, plus the cosine learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Node


@dataclass
class AdamState:
    """Per-parameter first/second moment accumulators and step counter."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-6
    base_lr: float = 1e-3
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def ensure(self, name: str, shape: tuple[int, ...]) -> None:
        if name not in self.m:
            self.m[name] = np.zeros(shape)
            self.v[name] = np.zeros(shape)
        elif self.m[name].shape != shape:
            raise ValueError(f"accumulator shape mismatch for {name!r}")


def adam_step(state: AdamState, params: dict[str, Node],
              grads: dict[str, np.ndarray], lr: float) -> None:
    """One Adam update, in place on the parameter nodes.

    Decoupled weight decay shrinks the parameter before the Adam delta:
    theta <- theta - lr*wd*theta, then the bias-corrected moment update.
    """
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for name, param in params.items():
        g = grads[name]
        if g.shape != param.value.shape:
            raise ValueError(f"gradient shape mismatch for {name!r}")
        state.ensure(name, param.value.shape)
        theta = param.value
        if state.weight_decay:
            theta -= (lr * state.weight_decay) * theta
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        theta -= lr * m_hat / (np.sqrt(v_hat) + state.eps)


def cosine_lr(step: int, total_steps: int, lr_init: float,
              lr_min: float = 0.0) -> float:
    """Cosine-annealed learning rate; clamps to lr_min past the horizon."""
    if step < 0:
        raise ValueError("step must be non-negative")
    if total_steps <= 0:
        raise ValueError("total_steps must be positive")
    if step >= total_steps:
        return lr_min
    return lr_min + 0.5 * (lr_init - lr_min) * (1.0 + math.cos(math.pi * step / total_steps))
