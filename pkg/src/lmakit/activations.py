"""Piecewise-linear activation layers and Swish.

All layers are :class:`~lmakit.nn.Module` subclasses. Besides ``forward``,
each piecewise-linear layer exposes ``pattern(x)`` (the discrete piece every
element falls in, used by the region counters) and records ``workspace``, the
number of auxiliary values materialized by its last forward pass.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .engine import Tensor, accumulate, make_op, ordered_dot, relu
from .errors import (
    ConfigurationError,
    ContractError,
    DimensionError,
    InvariantError,
    UnsupportedActivationError,
)
from .nn import Module
from .quant import quantize_ste

KINDS = ("relu", "prelu", "swish", "maxout", "aplu", "lma")
EMA_FACTOR = 0.99
MIN_SIGMA = 1e-8


# ---------------------------------------------------------------------------
# LMA: batch segmentation + per-segment affine maps


def lma_cut_points(batch, k: int, mode: str = "value") -> np.ndarray:
    """Interior cut points ``b_1 .. b_{k-1}`` of a layer's input batch.

    ``value`` mode spaces the points evenly over mu +- 3 sigma, with mu and
    sigma taken over every element of the batch (one set per layer).
    ``frequency`` mode uses the j/k empirical quantiles instead, so each
    segment receives the same number of inputs.
    """
    x = np.asarray(batch.data if isinstance(batch, Tensor) else batch, dtype=np.float64)
    if x.size == 0:
        raise ContractError("cannot segment an empty batch")
    if k < 2:
        raise ConfigurationError(f"segment count must be >= 2, got {k}")
    j = np.arange(1, k)
    if mode == "frequency":
        return np.quantile(x.reshape(-1), j / k)
    if mode != "value":
        raise ConfigurationError(f"unknown segmentation mode {mode!r}")
    mu = x.mean()
    sigma = max(float(x.std()), MIN_SIGMA)
    # mu - 3s + j * 6s/k, written so that the middle point lands on mu exactly
    return mu + sigma * (6.0 * j / k - 3.0)


def lma_segments(x: np.ndarray, cuts: np.ndarray) -> np.ndarray:
    """Segment index per element; segment j covers (b_j, b_{j+1}]."""
    return np.searchsorted(cuts, x, side="left")


def _check_cuts(cuts: np.ndarray):
    if cuts.ndim != 1 or np.any(np.diff(cuts) <= 0) or not np.all(np.isfinite(cuts)):
        raise InvariantError(f"cut points must be finite and strictly increasing: {cuts}")


class LMA(Module):
    """Light multi-segment activation, shared across all units of a layer.

    Holds ``k`` slopes and biases (trainable), the cut points of the most
    recent training batch, and their exponential moving average used in
    eval mode. Initialized to behave as ReLU.
    """

    def __init__(self, k: int = 8, ema_factor: float = EMA_FACTOR, mode: str = "value"):
        super().__init__()
        if k < 2 or k % 2:
            raise ConfigurationError(f"LMA needs an even segment count >= 2, got {k}")
        if not 0.0 < ema_factor < 1.0:
            raise ConfigurationError(f"ema_factor must be in (0, 1), got {ema_factor}")
        self.k = k
        self.ema_factor = ema_factor
        self.mode = mode
        self.alpha = Tensor(np.r_[np.zeros(k // 2), np.ones(k // 2)], requires_grad=True)
        self.beta = Tensor(np.zeros(k), requires_grad=True)
        self._params = {"alpha": self.alpha, "beta": self.beta}
        self.cuts: np.ndarray | None = None
        # standard-normal cut points until the first training batch arrives
        self.ema_initialized = False
        self._buffers = {"cuts_ema": lma_cut_points(np.array([-1.0, 1.0]), k), "ema_initialized": np.zeros(1)}
        self.workspace = 0

    @property
    def cuts_ema(self) -> np.ndarray:
        return self._buffers["cuts_ema"]

    def _on_buffer_loaded(self, name):
        if name == "ema_initialized":
            self.ema_initialized = bool(self._buffers[name][0])

    def active_cuts(self, x: np.ndarray | None = None) -> np.ndarray:
        if self.training:
            if x is None:
                raise ContractError("training-mode cut points need the batch")
            return lma_cut_points(x, self.k, self.mode)
        return self.cuts_ema

    def forward(self, x: Tensor) -> Tensor:
        if self.training:
            self.cuts = lma_cut_points(x.data, self.k, self.mode)
            lma_update_ema(self, self.cuts)
            cuts = self.cuts
        else:
            cuts = self.cuts_ema
        return lma_forward(x, self, cuts)

    def pattern(self, x: np.ndarray) -> np.ndarray:
        return lma_segments(x, self.active_cuts(x))


def lma_forward(x: Tensor, state: LMA, cuts: np.ndarray | None = None) -> Tensor:
    """Map each element to alpha_j * x + beta_j for its segment j.

    ``cuts`` defaults to the batch cut points in train mode and the moving
    average in eval mode. Cut points receive no gradient.
    """
    if cuts is None:
        cuts = state.active_cuts(x.data)
    cuts = np.asarray(cuts, dtype=np.float64)
    if cuts.shape != (state.k - 1,):
        raise DimensionError(f"expected {state.k - 1} cut points, got {cuts.shape}")
    _check_cuts(cuts)
    seg = lma_segments(x.data, cuts)
    state.workspace = seg.size
    alpha, beta = state.alpha, state.beta
    out = alpha.data[seg] * x.data + beta.data[seg]

    def _bw(g):
        dx, dalpha, dbeta = lma_backward(g, x.data, state, seg)
        accumulate(x, dx)
        accumulate(alpha, dalpha)
        accumulate(beta, dbeta)

    return make_op(out, (x, alpha, beta), _bw, "lma")


def lma_backward(g: np.ndarray, x: np.ndarray, state: LMA, seg: np.ndarray):
    """Gradients for x, alpha and beta given the recorded segment indices."""
    if g.shape != x.shape or seg.shape != x.shape:
        raise DimensionError(f"gradient {g.shape}, input {x.shape}, segments {seg.shape} disagree")
    flat = seg.reshape(-1)
    dalpha = np.bincount(flat, weights=(g * x).reshape(-1), minlength=state.k)
    dbeta = np.bincount(flat, weights=g.reshape(-1), minlength=state.k)
    return g * state.alpha.data[seg], dalpha, dbeta


def lma_update_ema(state: LMA, b_batch: np.ndarray):
    """Fold batch cut points into the running average (factor on the old value)."""
    if not state.training:
        raise ContractError("cut point average is only updated in train mode")
    b_batch = np.asarray(b_batch, dtype=np.float64)
    if not state.ema_initialized:
        state._buffers["cuts_ema"] = b_batch.copy()
        state._buffers["ema_initialized"] = np.ones(1)
        state.ema_initialized = True
    else:
        f = state.ema_factor
        state._buffers["cuts_ema"] = f * state.cuts_ema + (1.0 - f) * b_batch


# ---------------------------------------------------------------------------
# APLU: ReLU plus per-unit hinges


class APLU(Module):
    """Adaptive piecewise linear unit with ``k - 2`` hinges per unit (k segments)."""

    def __init__(self, n: int, k: int, rng: np.random.Generator):
        super().__init__()
        if k < 2:
            raise ConfigurationError(f"APLU needs k >= 2 segments, got {k}")
        self.n, self.k = n, k
        self.hinges = k - 2
        self.a = Tensor(rng.uniform(-0.5, 0.5, (n, self.hinges)), requires_grad=True)
        self.b = Tensor(rng.standard_normal((n, self.hinges)), requires_grad=True)
        self._params = {"a": self.a, "b": self.b}
        self.workspace = 0

    def forward(self, x: Tensor) -> Tensor:
        return aplu_forward(x, self)

    def pattern(self, x: np.ndarray) -> np.ndarray:
        hinge_on = (self.b.data[None] - x[:, :, None]) > 0
        return np.concatenate([x > 0, hinge_on.reshape(x.shape[0], -1)], axis=1).astype(np.int64)


def aplu_forward(x: Tensor, state: APLU) -> Tensor:
    """h(x) = max(0, x) + sum_j a_j * max(0, b_j - x), per unit."""
    if x.data.ndim != 2 or x.shape[1] != state.n:
        raise DimensionError(f"APLU over {state.n} units got input {x.shape}")
    a, b = state.a, state.b
    lin = b.data[None] - x.data[:, :, None]
    hinge = np.maximum(lin, 0.0)
    state.workspace = hinge.size
    on = lin > 0
    pos = x.data > 0
    out = np.where(pos, x.data, 0.0) + (a.data[None] * hinge).sum(axis=2)

    def _bw(g):
        g3 = g[:, :, None]
        accumulate(x, g * pos - (g3 * a.data[None] * on).sum(axis=2))
        accumulate(a, (g3 * hinge).sum(axis=0))
        accumulate(b, (g3 * a.data[None] * on).sum(axis=0))

    return make_op(out, (x, a, b), _bw, "aplu")


# ---------------------------------------------------------------------------
# Maxout: max over k affine candidates (replaces the dense layer)


class Maxout(Module):
    def __init__(self, n_in: int, n_out: int, k: int, rng: np.random.Generator):
        super().__init__()
        if k < 2:
            raise ConfigurationError(f"Maxout rank must be >= 2, got {k}")
        self.n_in, self.n_out, self.k = n_in, n_out, k
        self.weight = Tensor(rng.normal(0.0, np.sqrt(2.0 / n_in), (k, n_in, n_out)), requires_grad=True)
        self.bias = Tensor(np.zeros((k, n_out)), requires_grad=True)
        self._params = {"weight": self.weight, "bias": self.bias}
        self.quant_bits: int | None = None
        self.workspace = 0

    def forward(self, x: Tensor) -> Tensor:
        if self.quant_bits:
            return maxout_forward(x, quantize_ste(self.weight, self.quant_bits), self.bias, self)
        return maxout_forward(x, self.weight, self.bias, self)

    def pattern(self, x: np.ndarray) -> np.ndarray:
        z = ordered_dot(x, self.weight.data) + self.bias.data[None]
        return np.argmax(z, axis=1)


def maxout_forward(x: Tensor, weight: Tensor, bias: Tensor, state: Maxout | None = None) -> Tensor:
    """Elementwise max over the k candidates ``x @ W_j + c_j``.

    The gradient goes to the winning candidate; ties go to the lowest index.
    """
    k, n_in, n_out = weight.shape
    if x.data.ndim != 2 or x.shape[1] != n_in:
        raise DimensionError(f"Maxout({n_in}, {n_out}) got input {x.shape}")
    if state is not None and not state.training:
        z = ordered_dot(x.data, weight.data) + bias.data[None]
    else:
        z = np.einsum("bi,kio->bko", x.data, weight.data) + bias.data[None]
    if state is not None:
        state.workspace = z.size
    win = np.argmax(z, axis=1)
    out = np.take_along_axis(z, win[:, None, :], axis=1)[:, 0, :]

    def _bw(g):
        gz = np.zeros_like(z)
        np.put_along_axis(gz, win[:, None, :], g[:, None, :], axis=1)
        accumulate(x, np.einsum("bko,kio->bi", gz, weight.data))
        accumulate(weight, np.einsum("bi,bko->kio", x.data, gz))
        accumulate(bias, gz.sum(axis=0))

    return make_op(out, (x, weight, bias), _bw, "maxout")


# ---------------------------------------------------------------------------
# two-segment and smooth baselines


class ReLU(Module):
    def __init__(self):
        super().__init__()
        self.workspace = 0

    def forward(self, x: Tensor) -> Tensor:
        return relu_forward(x)

    def pattern(self, x: np.ndarray) -> np.ndarray:
        return (x > 0).astype(np.int64)


def relu_forward(x: Tensor) -> Tensor:
    return relu(x)


class PReLU(Module):
    """Parametric ReLU with one trainable negative-side slope per layer."""

    def __init__(self, init: float = 0.25):
        super().__init__()
        self.a = Tensor(np.asarray(init), requires_grad=True)
        self._params = {"a": self.a}
        self.workspace = 0

    def forward(self, x: Tensor) -> Tensor:
        return prelu_forward(x, self)

    def pattern(self, x: np.ndarray) -> np.ndarray:
        return (x > 0).astype(np.int64)


def prelu_forward(x: Tensor, state: PReLU) -> Tensor:
    a = state.a
    pos = x.data > 0
    out = np.where(pos, x.data, a.data * x.data)

    def _bw(g):
        accumulate(x, np.where(pos, g, g * a.data))
        accumulate(a, np.asarray((g * x.data * ~pos).sum()))

    return make_op(out, (x, a), _bw, "prelu")


class Swish(Module):
    """x * sigmoid(beta * x) with a trainable per-layer beta."""

    def __init__(self, init: float = 1.0):
        super().__init__()
        self.beta = Tensor(np.asarray(init), requires_grad=True)
        self._params = {"beta": self.beta}
        self.workspace = 0

    def forward(self, x: Tensor) -> Tensor:
        return swish_forward(x, self)

    def pattern(self, x: np.ndarray) -> np.ndarray:
        raise UnsupportedActivationError("Swish is not piecewise linear; it has no linear regions")


def swish_forward(x: Tensor, state: Swish) -> Tensor:
    beta = state.beta
    s = expit(beta.data * x.data)
    state.workspace = s.size
    out = x.data * s

    def _bw(g):
        ds = s * (1.0 - s)
        accumulate(x, g * (s + beta.data * x.data * ds))
        accumulate(beta, np.asarray((g * x.data * x.data * ds).sum()))

    return make_op(out, (x, beta), _bw, "swish")


def make_activation(kind: str, n: int, segments: int, rng: np.random.Generator) -> Module:
    """Activation layer for ``n`` units. Maxout is built by the model, not here."""
    if kind == "relu":
        return ReLU()
    if kind == "prelu":
        return PReLU()
    if kind == "swish":
        return Swish()
    if kind == "aplu":
        return APLU(n, segments, rng)
    if kind == "lma":
        return LMA(segments)
    if kind == "maxout":
        raise ConfigurationError("maxout replaces the dense layer; build it with Maxout(n_in, n_out, k)")
    raise ConfigurationError(f"unknown activation {kind!r}; expected one of {', '.join(KINDS)}")
