"""Adam with bias correction, plus seeded uniform initialisation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import ShapeMismatch, Tensor


@dataclass
class AdamState:
    """Moment estimates for one parameter tensor.

    ``t`` counts completed steps. With ``delta_inside_sqrt`` the denominator
    is ``sqrt(v_hat + delta)`` instead of the default ``sqrt(v_hat) + delta``.
    """

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    delta: float = 1e-8
    delta_inside_sqrt: bool = False

    @classmethod
    def for_shape(cls, shape, **kw) -> "AdamState":
        return cls(m=np.zeros(shape), v=np.zeros(shape), **kw)


def adam_step(state: AdamState, param: Tensor, grad: np.ndarray) -> Tensor:
    """Apply one Adam update to ``param`` in place and return it."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != param.shape or state.m.shape != param.shape:
        raise ShapeMismatch(f"adam_step: param {param.shape}, grad {grad.shape}, state {state.m.shape}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    state.m = b1 * state.m + (1.0 - b1) * grad
    state.v = b2 * state.v + (1.0 - b2) * grad * grad
    m_hat = state.m / (1.0 - b1**state.t)
    v_hat = state.v / (1.0 - b2**state.t)
    if state.delta_inside_sqrt:
        denom = np.sqrt(v_hat + state.delta)
    else:
        denom = np.sqrt(v_hat) + state.delta
    param.data = param.data - state.alpha * m_hat / denom
    return param


@dataclass
class Adam:
    """Owns one :class:`AdamState` per parameter; optional exponential lr decay."""

    params: Sequence[Tensor]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    delta: float = 1e-8
    decay: float = 1.0
    states: list[AdamState] = field(init=False)

    def __post_init__(self):
        self.params = list(self.params)
        self.states = [
            AdamState.for_shape(p.shape, alpha=self.lr, beta1=self.beta1, beta2=self.beta2, delta=self.delta)
            for p in self.params
        ]

    def step(self) -> None:
        for p, st in zip(self.params, self.states):
            if p.grad is not None:
                adam_step(st, p, p.grad)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def decay_lr(self) -> None:
        for st in self.states:
            st.alpha *= self.decay

    @property
    def alpha(self) -> float:
        return self.states[0].alpha if self.states else self.lr


def uniform_init(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    """Uniform in [-a, a] with a = sqrt(6 / (fan_in + fan_out))."""
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out) if shape is None else shape)
