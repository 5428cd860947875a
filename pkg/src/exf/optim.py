"""AdamW with decoupled weight decay and a warmup + cosine learning-rate schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, InvalidParameterError


@dataclass
class AdamWState:
    base_lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        if not self.base_lr > 0:
            raise InvalidParameterError(f"base_lr must be > 0, got {self.base_lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise InvalidParameterError("beta1 and beta2 must lie in [0, 1)")
        if self.weight_decay < 0 or not self.eps > 0:
            raise InvalidParameterError("weight_decay must be >= 0 and eps > 0")


def adamw_step(params, grads, state: AdamWState, lr: float | None = None):
    """One AdamW update.

    ``theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * theta``,
    with the decay applied to the pre-update parameters.  Returns new
    parameter arrays; ``state`` is advanced in place and also returned.
    """
    lr = state.base_lr if lr is None else lr
    if len(params) != len(grads):
        raise InvalidInputError(f"{len(params)} parameters but {len(grads)} gradients")
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise InvalidInputError(f"parameter {i}: shape {p.shape} vs gradient {g.shape}")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    elif any(m.shape != p.shape for m, p in zip(state.m, params)) or len(state.m) != len(params):
        raise InvalidInputError("optimizer state does not match the parameter shapes")

    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        out.append(p - lr * m_hat / (np.sqrt(v_hat) + state.eps) - lr * state.weight_decay * p)
    return out, state


@dataclass(frozen=True)
class Schedule:
    total_epochs: int
    base_lr: float
    warmup_epochs: int = 0
    min_lr: float = 0.0

    def __post_init__(self):
        if self.total_epochs < 1:
            raise InvalidParameterError("total_epochs must be >= 1")
        if not 0 <= self.warmup_epochs < self.total_epochs:
            raise InvalidParameterError("warmup_epochs must lie in [0, total_epochs)")
        if not 0 <= self.min_lr <= self.base_lr:
            raise InvalidParameterError("need 0 <= min_lr <= base_lr")


def lr_at(schedule: Schedule, epoch: float) -> float:
    """Learning rate at a (possibly fractional) epoch."""
    if not 0 <= epoch <= schedule.total_epochs:
        raise InvalidParameterError(f"epoch {epoch} outside [0, {schedule.total_epochs}]")
    w = schedule.warmup_epochs
    if epoch < w:
        return schedule.base_lr * epoch / w
    progress = (epoch - w) / (schedule.total_epochs - w)
    span = schedule.base_lr - schedule.min_lr
    return schedule.min_lr + 0.5 * span * (1.0 + math.cos(math.pi * progress))
