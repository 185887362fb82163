"""Layers built on the tensor engine: dense, batch norm, dropout, containers."""

from __future__ import annotations

import numpy as np

from .engine import Tensor, accumulate, add, make_op, matmul
from .errors import DimensionError
from .quant import quantize_ste


class Module:
    """Base layer. Subclasses fill ``_params`` and ``_buffers``."""

    training: bool = True

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._buffers: dict[str, np.ndarray] = {}

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def children(self) -> list["Module"]:
        return []

    def named_parameters(self, prefix: str = ""):
        for name, p in self._params.items():
            yield prefix + name, p
        for i, child in enumerate(self.children()):
            yield from child.named_parameters(f"{prefix}{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = ""):
        for name, b in self._buffers.items():
            yield prefix + name, b
        for i, child in enumerate(self.children()):
            yield from child.named_buffers(f"{prefix}{i}.")

    def set_buffer(self, name: str, value: np.ndarray):
        head, _, rest = name.partition(".")
        if rest:
            self.children()[int(head)].set_buffer(rest, value)
        else:
            self._buffers[name] = value
            self._on_buffer_loaded(name)

    def _on_buffer_loaded(self, name: str):
        pass

    def train(self, mode: bool = True):
        self.training = mode
        for child in self.children():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        self.weight = Tensor(rng.normal(0.0, np.sqrt(2.0 / n_in), (n_in, n_out)), requires_grad=True)
        self.bias = Tensor(np.zeros(n_out), requires_grad=True)
        self._params = {"weight": self.weight, "bias": self.bias}
        self.quant_bits: int | None = None

    def forward(self, x: Tensor) -> Tensor:
        if x.data.ndim != 2 or x.shape[1] != self.n_in:
            raise DimensionError(f"Linear({self.n_in}, {self.n_out}) got input {x.shape}")
        w = quantize_ste(self.weight, self.quant_bits) if self.quant_bits else self.weight
        # eval outputs must not depend on batch composition
        return add(matmul(x, w, ordered=not self.training), self.bias)


class BatchNorm1d(Module):
    """Per-feature batch normalization with running statistics.

    Running statistics follow the same retention convention as the LMA cut
    point average: ``running = factor * running + (1 - factor) * batch``.
    """

    def __init__(self, n: int, ema_factor: float = 0.99, eps: float = 1e-5):
        super().__init__()
        self.n = n
        self.ema_factor = ema_factor
        self.eps = eps
        self.gamma = Tensor(np.ones(n), requires_grad=True)
        self.beta = Tensor(np.zeros(n), requires_grad=True)
        self._params = {"gamma": self.gamma, "beta": self.beta}
        self._buffers = {"running_mean": np.zeros(n), "running_var": np.ones(n)}

    def forward(self, x: Tensor) -> Tensor:
        gamma, beta = self.gamma, self.beta
        if self.training:
            mu = x.data.mean(axis=0)
            var = x.data.var(axis=0)
            f = self.ema_factor
            self._buffers["running_mean"] = f * self._buffers["running_mean"] + (1 - f) * mu
            self._buffers["running_var"] = f * self._buffers["running_var"] + (1 - f) * var
        else:
            mu = self._buffers["running_mean"]
            var = self._buffers["running_var"]
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x.data - mu) * inv
        training = self.training
        m = x.shape[0]

        def _bw(g):
            accumulate(gamma, (g * xhat).sum(axis=0))
            accumulate(beta, g.sum(axis=0))
            gx = g * gamma.data
            if training:
                dx = inv / m * (m * gx - gx.sum(axis=0) - xhat * (gx * xhat).sum(axis=0))
            else:
                dx = gx * inv
            accumulate(x, dx)

        return make_op(xhat * gamma.data + beta.data, (x, gamma, beta), _bw, "batch_norm")


class Dropout(Module):
    """Inverted dropout; masks come from the run's own generator."""

    def __init__(self, p: float, rng: np.random.Generator):
        super().__init__()
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {p}")
        self.p = p
        self.rng = rng

    def forward(self, x: Tensor) -> Tensor:
        if not self.training or self.p == 0.0:
            return x
        mask = (self.rng.random(x.shape) >= self.p) / (1.0 - self.p)

        def _bw(g):
            accumulate(x, g * mask)

        return make_op(x.data * mask, (x,), _bw, "dropout")


class Sequential(Module):
    def __init__(self, layers):
        super().__init__()
        self.layers = list(layers)

    def children(self):
        return self.layers

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x

    def __iter__(self):
        return iter(self.layers)

    def __len__(self):
        return len(self.layers)
