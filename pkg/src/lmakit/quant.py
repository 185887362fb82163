"""Uniform k-bit weight quantization with a straight-through gradient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import Tensor, accumulate, make_op
from .errors import ConfigurationError


@dataclass(frozen=True)
class QuantConfig:
    bits: int = 8
    range_policy: str = "minmax"

    def __post_init__(self):
        if not 2 <= self.bits <= 8:
            raise ConfigurationError(f"bits must be in [2, 8], got {self.bits}")
        if self.range_policy != "minmax":
            raise ConfigurationError(f"unsupported range policy {self.range_policy!r}")


def quantize_array(w: np.ndarray, bits: int) -> np.ndarray:
    """Snap every value to the nearest of ``2**bits`` levels spanning [min, max].

    Ties round half away from zero in level units. A constant array is
    returned unchanged. The output always contains min(w) and max(w)
    exactly, which makes the map idempotent.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.size == 0:
        return w.copy()
    lo, hi = float(w.min()), float(w.max())
    if lo == hi:
        return w.copy()
    top = 2**bits - 1
    # divide by the range before scaling so tiny (subnormal) ranges do not underflow to a zero step
    idx = np.clip(np.floor((w - lo) / (hi - lo) * top + 0.5), 0, top)
    q = lo + (hi - lo) * (idx / top)
    q[idx == top] = hi
    return q


def quantize_uniform(w: Tensor, cfg: QuantConfig) -> Tensor:
    """Quantized copy of ``w`` (no gradient recorded)."""
    return Tensor(quantize_array(w.data, cfg.bits))


def ste_backward(g: np.ndarray) -> np.ndarray:
    # rounding has zero derivative almost everywhere; pass the gradient through
    return g


def quantize_ste(w: Tensor, bits: int) -> Tensor:
    """Forward: quantized weights. Backward: identity onto the full-precision ``w``."""

    def _bw(g):
        accumulate(w, ste_backward(g))

    return make_op(quantize_array(w.data, bits), (w,), _bw, f"quantize{bits}")
