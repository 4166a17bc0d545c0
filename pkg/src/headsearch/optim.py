"""Adam with bias correction and a warmup + cosine-decay learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_shape(cls, shape, **kw) -> "AdamState":
        return cls(m=np.zeros(shape), v=np.zeros(shape), **kw)


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState, lr: float) -> None:
    """One in-place Adam update with bias correction."""
    state.step += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grad
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * grad * grad
    mhat = state.m / (1.0 - state.beta1 ** state.step)
    vhat = state.v / (1.0 - state.beta2 ** state.step)
    param -= lr * mhat / (np.sqrt(vhat) + state.epsilon)


class Adam:
    """Adam over a list of parameter tensors. Missing grads count as zero."""

    def __init__(self, params: list[Tensor], beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8):
        self.params = list(params)
        self.states = [AdamState.for_shape(p.shape, beta1=beta1, beta2=beta2,
                                           epsilon=epsilon) for p in self.params]

    def step(self, lr: float) -> None:
        for p, s in zip(self.params, self.states):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            adam_step(p.data, g, s, lr)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


@dataclass(frozen=True)
class ScheduleSpec:
    base_lr: float
    total_steps: int
    warmup_steps: int = 0

    def __post_init__(self):
        if self.base_lr <= 0:
            raise ValueError(f"base_lr must be positive, got {self.base_lr}")
        if not 0 <= self.warmup_steps < self.total_steps:
            raise ValueError(f"need 0 <= warmup_steps < total_steps, got "
                             f"{self.warmup_steps} / {self.total_steps}")


def lr_at(step: int, spec: ScheduleSpec) -> float:
    """Linear ramp 0 -> base_lr over warmup, then cosine decay to 0."""
    if not 0 <= step <= spec.total_steps:
        raise ValueError(f"step {step} outside [0, {spec.total_steps}]")
    w = spec.warmup_steps
    if step < w:
        return spec.base_lr * step / w
    frac = (step - w) / (spec.total_steps - w)
    return spec.base_lr * 0.5 * (1.0 + math.cos(math.pi * frac))
