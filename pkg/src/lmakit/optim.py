"""First-order optimizers and a plateau learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import Tensor
from .errors import ContractError


class Optimizer:
    def __init__(self, params, lr: float, weight_decay: float = 0.0):
        self.params: list[Tensor] = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.step_count = 0

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def _grads(self):
        for p in self.params:
            if p.grad is None:
                raise ContractError(f"parameter {p!r} has no gradient")
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            yield p, g

    def step(self):
        raise NotImplementedError


class SGD(Optimizer):
    """SGD with heavy-ball momentum: v = m*v + g; p -= lr*v."""

    def __init__(self, params, lr=0.01, momentum=0.9, weight_decay=0.0):
        super().__init__(params, lr, weight_decay)
        self.momentum = momentum
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.step_count += 1
        for (p, g), v in zip(self._grads(), self.velocity):
            if self.momentum:
                v *= self.momentum
                v += g
                p.data -= self.lr * v
            else:
                p.data -= self.lr * g


class Adam(Optimizer):
    def __init__(self, params, lr=1e-3, betas=(0.9, 0.998), eps=1e-8, weight_decay=0.0):
        super().__init__(params, lr, weight_decay)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for (p, g), m, v in zip(self._grads(), self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(kind: str, params, lr: float, momentum: float = 0.9,
                   beta2: float = 0.998, weight_decay: float = 0.0) -> Optimizer:
    if kind == "sgd":
        return SGD(params, lr=lr, momentum=momentum, weight_decay=weight_decay)
    if kind == "adam":
        return Adam(params, lr=lr, betas=(momentum, beta2), weight_decay=weight_decay)
    raise ValueError(f"unknown optimizer {kind!r}")


@dataclass
class PlateauDecay:
    """Multiply the learning rate by ``factor`` when the tracked metric (higher is better) stalls.

    ``patience`` epochs without improvement trigger a decay; after a decay the
    schedule waits ``cooldown`` epochs before counting again, and stops
    decaying after ``max_decays``.
    """

    factor: float = 0.5
    patience: int = 10
    cooldown: int = 8
    max_decays: int = 11
    best: float = -np.inf
    bad_epochs: int = 0
    cooldown_left: int = 0
    decays: int = 0
    history: list = field(default_factory=list)

    def update(self, optimizer: Optimizer, metric: float) -> bool:
        self.history.append(metric)
        if metric > self.best:
            self.best = metric
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        if self.cooldown_left > 0:
            self.cooldown_left -= 1
            self.bad_epochs = 0
            return False
        if self.bad_epochs >= self.patience and self.decays < self.max_decays:
            optimizer.lr *= self.factor
            self.decays += 1
            self.bad_epochs = 0
            self.cooldown_left = self.cooldown
            return True
        return False
