"""Parameter and activation-workspace accounting.

Workspace is the number of auxiliary values an activation materializes in
one forward pass at batch size 1 (segment indices for LMA, hinge terms for
APLU, candidates for Maxout). It is counted, not measured in bytes.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .activations import KINDS
from .engine import Tensor
from .errors import ConfigurationError
from .model import MLP, ArchSpec

CSV_COLUMNS = ("activation", "n", "k", "params_added", "workspace_elems")


@dataclass
class CostReport:
    activation: str
    n: tuple[int, ...]
    k: int
    layers: list[dict] = field(default_factory=list)
    total_params: int = 0
    params_added: int = 0
    workspace_total: int = 0


def activation_params_added(kind: str, n_in: int, n_out: int, k: int) -> int:
    """Trainable scalars an activation adds on top of a plain dense layer."""
    if kind == "relu":
        return 0
    if kind in ("prelu", "swish"):
        return 1
    if kind == "lma":
        return 2 * k
    if kind == "aplu":
        return 2 * (k - 2) * n_out
    if kind == "maxout":
        return (k - 1) * (n_in * n_out + n_out)
    raise ConfigurationError(f"unknown activation {kind!r}")


def workspace_elems(kind: str, n: int, k: int) -> int:
    if kind in ("relu", "prelu"):
        return 0
    if kind in ("swish", "lma"):
        return n
    if kind == "aplu":
        return (k - 2) * n
    if kind == "maxout":
        return k * n
    raise ConfigurationError(f"unknown activation {kind!r}")


def param_count(arch: ArchSpec) -> CostReport:
    """Closed-form parameter counts per hidden layer and in total."""
    if arch.activation not in KINDS:
        raise ConfigurationError(f"unknown activation {arch.activation!r}")
    report = CostReport(arch.activation, arch.hidden, arch.segments)
    n_in = arch.input_dim
    for width in arch.hidden:
        dense = n_in * width + width
        added = activation_params_added(arch.activation, n_in, width, arch.segments)
        bn = 2 * width if arch.batch_norm else 0
        report.layers.append({"n_in": n_in, "n_out": width, "dense": dense, "added": added,
                              "batch_norm": bn, "workspace": workspace_elems(arch.activation, width, arch.segments)})
        report.params_added += added
        report.total_params += dense + added + bn
        report.workspace_total += report.layers[-1]["workspace"]
        n_in = width
    report.total_params += n_in * arch.output_dim + arch.output_dim
    return report


def measure_params(model: MLP) -> int:
    return int(sum(p.size for p in model.parameters()))


def measure_workspace(model: MLP, sample) -> CostReport:
    """Run one eval-mode forward on a single sample and read each layer's counter."""
    x = np.asarray(sample, dtype=np.float64).reshape(1, -1)
    model.eval()
    for layer in model.layers:
        if hasattr(layer, "workspace"):
            layer.workspace = 0
    model.forward(Tensor(x))
    arch = model.arch
    report = CostReport(arch.activation, arch.hidden, arch.segments)
    for i, layer in enumerate(model.layers):
        if hasattr(layer, "workspace"):
            report.layers.append({"index": i, "layer": type(layer).__name__, "workspace": int(layer.workspace)})
            report.workspace_total += int(layer.workspace)
    report.total_params = measure_params(model)
    report.params_added = report.total_params - measure_params(MLP(arch.with_activation("relu")))
    return report


def bench_memory(ns=(4, 16, 64), ks=(4, 8, 12), kinds=("relu", "prelu", "swish", "maxout", "aplu", "lma"),
                 seed: int = 0) -> list[dict]:
    """Measured added parameters and workspace for one n -> n hidden layer per config."""
    rows = []
    for n in ns:
        for k in ks:
            for kind in kinds:
                arch = ArchSpec(input_dim=n, hidden=(n,), output_dim=n, activation=kind, segments=k)
                rep = measure_workspace(MLP(arch, seed), np.random.default_rng(seed).standard_normal(n))
                rows.append({"activation": kind, "n": n, "k": k,
                             "params_added": rep.params_added, "workspace_elems": rep.workspace_total})
    return rows


def rows_to_csv(rows: list[dict], columns=CSV_COLUMNS) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: row[c] for c in columns})
    return buf.getvalue()
