"""Linear-region counting for small piecewise-linear networks.

Two empirical counters (exact in 1-D, a grid lower bound in 2-D) and the
closed-form Maxout/ReLU lower bound they are compared against.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from .activations import APLU, LMA, Maxout, Swish
from .engine import Tensor
from .errors import ConfigurationError, DimensionError, UnsupportedActivationError
from .model import MLP, ArchSpec
from .nn import Linear

SLOPE_RTOL = 1e-6
BISECT_TOL = 1e-9
MERGE_TOL = 1e-7
COINCIDENT_TOL = 1e-9
MAX_RESAMPLES = 10


@dataclass
class RegionCount:
    arch: dict
    activation: str
    k: int
    input_dim: int
    regions: int
    method: str
    breakpoints: list[float] = field(default_factory=list)
    degenerate: bool = False


@dataclass(frozen=True)
class BoundResult:
    L: int
    n: int
    k: int
    bound: int


def _require_piecewise_linear(model: MLP, dim: int):
    if model.arch.input_dim != dim:
        raise DimensionError(f"counter needs input dimension {dim}, model has {model.arch.input_dim}")
    for layer in model.layers:
        if isinstance(layer, Swish):
            raise UnsupportedActivationError("Swish networks have no finite set of linear regions")


def _evaluator(model: MLP):
    model.eval()

    def f(xs: np.ndarray) -> np.ndarray:
        return model.forward(Tensor(np.asarray(xs, dtype=np.float64).reshape(-1, 1))).data

    return f


def _same_slope(s1: np.ndarray, s2: np.ndarray) -> bool:
    scale = np.maximum(1.0, np.maximum(np.abs(s1), np.abs(s2)))
    return bool(np.all(np.abs(s1 - s2) <= SLOPE_RTOL * scale))


def count_regions_1d(model: MLP, interval=(-4.0, 4.0), resolution: int = 2001) -> RegionCount:
    """Count maximal sub-intervals of ``interval`` on which the output is affine.

    Every grid cell is tested by comparing its secant slope with one-sided
    slopes just inside both ends; cells that fail are bisected down to
    1e-9. A boundary is also declared where two adjacent affine pieces have
    different slopes. Jumps are caught by the same test, since a jump
    inflates the secant but not the one-sided slope on the far side.
    """
    _require_piecewise_linear(model, 1)
    f = _evaluator(model)
    lo, hi = map(float, interval)
    if not hi > lo:
        raise ConfigurationError(f"empty interval {interval}")
    xs = np.linspace(lo, hi, resolution)
    a, b = xs[:-1], xs[1:]
    d = (b - a) / 4.0
    vals = f(np.concatenate([xs, a + d, b - d]))
    fx = vals[:resolution]
    fa_in = vals[resolution:resolution + len(a)]
    fb_in = vals[resolution + len(a):]

    pieces: list[tuple[float, float, np.ndarray, np.ndarray, np.ndarray]] = []
    breaks: list[float] = []

    def affine(a_, b_, fa, fb, fai, fbi):
        dd = (b_ - a_) / 4.0
        s = (fb - fa) / (b_ - a_)
        return _same_slope(s, (fai - fa) / dd) and _same_slope(s, (fb - fbi) / dd), s

    def refine(a_, b_, fa, fb):
        dd = (b_ - a_) / 4.0
        m = 0.5 * (a_ + b_)
        fai, fm, fbi = f(np.array([a_ + dd, m, b_ - dd]))
        ok, s = affine(a_, b_, fa, fb, fai, fbi)
        if ok:
            pieces.append((a_, b_, s, fa, fb))
        elif b_ - a_ <= BISECT_TOL:
            breaks.append(m)
        else:
            refine(a_, m, fa, fm)
            refine(m, b_, fm, fb)

    for i in range(len(a)):
        ok, s = affine(a[i], b[i], fx[i], fx[i + 1], fa_in[i], fb_in[i])
        if ok:
            pieces.append((a[i], b[i], s, fx[i], fx[i + 1]))
        else:
            m = 0.5 * (a[i] + b[i])
            fm = f(np.array([m]))[0]
            refine(a[i], m, fx[i], fm)
            refine(m, b[i], fm, fx[i + 1])

    pieces.sort(key=lambda p: p[0])
    # slope changes exactly on a shared endpoint of two affine pieces
    for left, right in zip(pieces, pieces[1:]):
        if left[1] == right[0] and not _same_slope(left[2], right[2]):
            breaks.append(left[1])
    points = _merge(sorted(breaks))
    points = [p for p in points if not _removable(p, pieces)]
    return RegionCount(model.arch.to_dict(), model.arch.activation, model.arch.segments, 1,
                       len(points) + 1, "exact-1d", points)


def _merge(points: list[float]) -> list[float]:
    merged: list[list[float]] = []
    for p in points:
        if merged and p - merged[-1][-1] <= MERGE_TOL:
            merged[-1].append(p)
        else:
            merged.append([p])
    return [float(np.mean(c)) for c in merged]


def _removable(p: float, pieces) -> bool:
    """True when the affine pieces on both sides of ``p`` lie on one line."""
    if any(q[0] < p - MERGE_TOL and q[1] > p + MERGE_TOL for q in pieces):
        return True
    left = [q for q in pieces if q[0] < p - MERGE_TOL and q[1] <= p + MERGE_TOL]
    right = [q for q in pieces if q[1] > p + MERGE_TOL and q[0] >= p - MERGE_TOL]
    if not left or not right:
        return False
    _, lb, ls, _, lfb = max(left, key=lambda q: q[1])
    ra, _, rs, rfa, _ = min(right, key=lambda q: q[0])
    if not _same_slope(ls, rs):
        return False
    predicted = lfb + ls * (ra - lb)
    scale = np.maximum(1.0, np.abs(rfa))
    return bool(np.all(np.abs(predicted - rfa) <= SLOPE_RTOL * scale))


def count_regions_2d(model: MLP, box=((-1.0, 1.0), (-1.0, 1.0)), grid: int = 200) -> RegionCount:
    """Lower bound on the regions meeting ``box``, from a ``grid x grid`` raster.

    Every cell center and cell corner is labelled with its activation
    pattern. The inputs sharing one pattern form a convex polytope (each
    unit's piece is an interval of an affine function of the input once the
    upstream pattern is fixed), so each distinct pattern is exactly one
    connected region. Counting distinct patterns avoids the spurious
    components a 4-connected raster produces along thin wedges. Centers of
    an m-grid are corners of the 2m-grid, so doubling ``grid`` never loses
    a region.
    """
    _require_piecewise_linear(model, 2)
    model.eval()
    (x0, x1), (y0, y1) = box
    pts = []
    for offsets in (np.arange(grid) + 0.5, np.arange(grid + 1)):
        cx = x0 + offsets * (x1 - x0) / grid
        cy = y0 + offsets * (y1 - y0) / grid
        gx, gy = np.meshgrid(cx, cy, indexing="ij")
        pts.append(np.c_[gx.ravel(), gy.ravel()])
    pattern = model.activation_pattern(np.concatenate(pts))
    regions = len(np.unique(pattern, axis=0)) if pattern.shape[1] else 1
    return RegionCount(model.arch.to_dict(), model.arch.activation, model.arch.segments, 2,
                       regions, "grid-signature-2d")


# ---------------------------------------------------------------------------
# closed-form bounds


def maxout_region_bound(L: int, n: int, k: int) -> BoundResult:
    """k^(L-1) * k^n, the lower bound for L Maxout layers of width n and rank k."""
    if L < 1 or n < 1 or k < 2:
        raise ConfigurationError(f"need L >= 1, n >= 1, k >= 2; got L={L}, n={n}, k={k}")
    return BoundResult(L, n, k, k ** (L - 1) * k ** n)


def relu_region_bound(L: int, n: int) -> BoundResult:
    """ReLU as the rank-2 Maxout case."""
    return maxout_region_bound(L, n, 2)


def arrangement_max_regions(hyperplanes: int, dim: int) -> int:
    """Most regions ``hyperplanes`` affine hyperplanes can cut R^dim into."""
    return sum(comb(hyperplanes, i) for i in range(dim + 1))


# ---------------------------------------------------------------------------
# generic random networks for the counters


def hidden_breakpoints_1d(model: MLP) -> np.ndarray:
    """Input locations where a unit of the single hidden layer changes piece.

    Only defined for 1-D input and one hidden layer without batch norm.
    """
    first, act = model.layers[0], model.layers[1]
    if isinstance(first, Maxout):
        w, c = first.weight.data[:, 0, :], first.bias.data
        pts = []
        for i in range(first.k):
            for j in range(i + 1, first.k):
                dw = w[i] - w[j]
                ok = dw != 0
                pts.append(-(c[i] - c[j])[ok] / dw[ok])
        pts = np.sort(np.concatenate(pts))
        eps = 1e-7

        def winner(x):
            return np.argmax(x[:, None, None] * w[None] + c[None], axis=1)

        return pts[np.any(winner(pts - eps) != winner(pts + eps), axis=1)]
    if not isinstance(first, Linear) or first.n_in != 1:
        raise ConfigurationError("breakpoint enumeration needs a 1-D dense first layer")
    w, c = first.weight.data[0], first.bias.data
    if isinstance(act, LMA):
        knots = act.cuts_ema[None, :]
    elif isinstance(act, APLU):
        knots = np.c_[np.zeros(act.n), act.b.data]
    else:
        knots = np.zeros((len(w), 1))
    return np.sort(((knots - c[:, None]) / w[:, None]).ravel())


def generic_model(arch: ArchSpec, seed: int, calibration: int = 4096) -> tuple[MLP, bool]:
    """A network with random weights, biases and activation parameters.

    Dense biases are drawn from N(0, 1) so kinks do not coincide; LMA gets
    distinct random slopes and biases and its cut points from one training
    pass over standard-normal inputs. For single-hidden-layer 1-D nets the
    draw is repeated (up to 10 times) while two kinks lie within 1e-9; the
    returned flag is True if that never succeeded.
    """
    for attempt in range(MAX_RESAMPLES + 1):
        rng = np.random.default_rng([seed, attempt, 7])
        model = MLP(arch, int(rng.integers(2**31)))
        for layer in model.layers:
            if isinstance(layer, (Linear, Maxout)):
                layer.bias.data = rng.standard_normal(layer.bias.shape)
            if isinstance(layer, LMA):
                layer.alpha.data = rng.uniform(-2.0, 2.0, layer.k)
                layer.beta.data = rng.uniform(-1.0, 1.0, layer.k)
        model.train()
        model.forward(Tensor(rng.standard_normal((calibration, arch.input_dim))))
        model.eval()
        if arch.input_dim != 1 or len(arch.hidden) != 1:
            return model, False
        kinks = hidden_breakpoints_1d(model)
        if len(kinks) < 2 or np.min(np.diff(kinks)) > COINCIDENT_TOL:
            return model, False
    return model, True
