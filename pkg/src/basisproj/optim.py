"""Adam with bias correction and a cosine-annealed learning rate."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, TrainingError


@dataclass(frozen=True)
class CosineSchedule:
    lr_max: float
    lr_min: float = 0.0
    total_steps: int = 2000

    def __post_init__(self):
        if self.lr_min > self.lr_max:
            raise InvalidArgumentError("lr_min must not exceed lr_max")
        if self.total_steps < 1:
            raise InvalidArgumentError("total_steps must be at least 1")


def lr_at_step(s: int, sched: CosineSchedule) -> float:
    if s < 0:
        raise InvalidArgumentError("step must be non-negative")
    if s == 0:
        return sched.lr_max
    if s >= sched.total_steps:
        return sched.lr_min
    lr = sched.lr_min + 0.5 * (sched.lr_max - sched.lr_min) * (1.0 + math.cos(math.pi * s / sched.total_steps))
    return min(max(lr, sched.lr_min), sched.lr_max)  # rounding can overshoot by an ulp


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    base_lr: float = 1e-3
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, lr: float | None = None):
    """One Adam update, applied to ``params`` in place.

    Returns ``(params, state)`` for convenience.
    """
    lr = state.base_lr if lr is None else lr
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {name!r} at step {state.step + 1}")
        if name not in params:
            raise InvalidArgumentError(f"gradient for unknown parameter {name!r}")
        if np.shape(g) != np.shape(params[name]):
            raise InvalidArgumentError(f"{name}: gradient shape {np.shape(g)} != {np.shape(params[name])}")

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, g in grads.items():
        g = np.asarray(g, dtype=np.float64)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p = params[name]
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps_hat)
    return params, state
