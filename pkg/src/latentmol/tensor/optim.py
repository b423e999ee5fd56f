from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from latentmol.errors import MissingGradient
from latentmol.tensor.core import Tensor


def cosine_lr(step: int, total_steps: int, lr_max: float, lr_min: float | None = None) -> float:
    """One cosine cycle from ``lr_max`` at step 0 down to ``lr_min`` at ``total_steps``."""
    if lr_min is None:
        lr_min = lr_max / 100.0
    if total_steps <= 0:
        return lr_max
    t = min(max(step, 0), total_steps)
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * t / total_steps))


@dataclass
class Adam:
    """Adam with bias correction; the learning rate follows :func:`cosine_lr`."""

    params: dict[str, Tensor]
    lr_max: float = 1e-3
    total_steps: int = 1000
    lr_min: float | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for name, p in self.params.items():
            self.m.setdefault(name, np.zeros_like(p.data))
            self.v.setdefault(name, np.zeros_like(p.data))

    def lr_at(self, schedule_step: int) -> float:
        return cosine_lr(schedule_step, self.total_steps, self.lr_max, self.lr_min)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self, schedule_step: int | None = None, allow_missing: bool = False) -> float:
        """Apply one update; returns the learning rate used."""
        if schedule_step is None:
            schedule_step = self.step_count
        lr = self.lr_at(schedule_step)
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                if allow_missing:
                    continue
                raise MissingGradient(f"parameter {name!r} has no gradient")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (lr / c1) * m / (np.sqrt(v / c2) + self.eps)
            p.data -= update.astype(p.data.dtype)
        return lr
