"""MLP architectures, construction from an ArchSpec, and the model file format.

Model files are self-describing::

    8 bytes   magic b"LMAKIT\\x00\\x01"
    8 bytes   header length N, little-endian uint64
    N bytes   UTF-8 JSON header: {"arch": {...}, "tensors": [{"name", "shape", "kind"}, ...]}
    rest      every tensor listed in the header, in order, as little-endian float64
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .activations import KINDS, LMA, Maxout, make_activation
from .engine import Tensor
from .errors import ConfigurationError, FormatError
from .nn import BatchNorm1d, Dropout, Linear, Module, Sequential

MAGIC = b"LMAKIT\x00\x01"

# independent generator streams per run, so changing the activation never
# shifts the draws used for dense weights, dropout masks or batch order
STREAM_INIT, STREAM_ACTIVATION, STREAM_DROPOUT, STREAM_SHUFFLE = 0, 1, 2, 3


def stream(seed: int, which: int) -> np.random.Generator:
    return np.random.default_rng([seed, which])


@dataclass(frozen=True)
class ArchSpec:
    input_dim: int = 2
    hidden: tuple[int, ...] = (8,)
    output_dim: int = 2
    activation: str = "relu"
    segments: int = 8
    batch_norm: bool = False
    dropout: float = 0.0
    lma_mode: str = "value"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.activation not in KINDS:
            raise ConfigurationError(f"unknown activation {self.activation!r}; expected one of {', '.join(KINDS)}")
        if self.input_dim < 1 or self.output_dim < 1 or any(h < 1 for h in self.hidden):
            raise ConfigurationError(f"layer widths must be positive: {self}")
        if self.activation == "lma" and (self.segments < 2 or self.segments % 2):
            raise ConfigurationError(f"LMA needs an even segment count >= 2, got {self.segments}")
        if self.activation in ("aplu", "maxout") and self.segments < 2:
            raise ConfigurationError(f"{self.activation} needs segments >= 2, got {self.segments}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArchSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown architecture keys: {sorted(unknown)}")
        return cls(**d)

    def with_activation(self, activation: str, segments: int | None = None) -> "ArchSpec":
        d = self.to_dict()
        d["activation"] = activation
        if segments is not None:
            d["segments"] = segments
        return ArchSpec.from_dict(d)


class MLP(Module):
    def __init__(self, arch: ArchSpec, seed: int = 0):
        super().__init__()
        self.arch = arch
        init_rng = stream(seed, STREAM_INIT)
        act_rng = stream(seed, STREAM_ACTIVATION)
        drop_rng = stream(seed, STREAM_DROPOUT)
        layers: list[Module] = []
        n_in = arch.input_dim
        for width in arch.hidden:
            if arch.activation == "maxout":
                layers.append(Maxout(n_in, width, arch.segments, init_rng))
            else:
                layers.append(Linear(n_in, width, init_rng))
            if arch.batch_norm:
                layers.append(BatchNorm1d(width))
            if arch.activation != "maxout":
                if arch.activation == "lma":
                    layers.append(LMA(arch.segments, mode=arch.lma_mode))
                else:
                    layers.append(make_activation(arch.activation, width, arch.segments, act_rng))
            if arch.dropout:
                layers.append(Dropout(arch.dropout, drop_rng))
            n_in = width
        layers.append(Linear(n_in, arch.output_dim, init_rng))
        self.net = Sequential(layers)

    def children(self):
        return [self.net]

    def forward(self, x: Tensor) -> Tensor:
        if not isinstance(x, Tensor):
            x = Tensor(x)
        return self.net(x)

    @property
    def layers(self) -> list[Module]:
        return self.net.layers

    def activation_layers(self) -> list[Module]:
        return [layer for layer in self.layers if hasattr(layer, "pattern")]

    def dense_parameters(self) -> list[tuple[str, Tensor]]:
        """Parameters of plain dense layers (excludes activation state)."""
        return [(name, p) for name, p in self.named_parameters()
                if isinstance(self._layer_of(name), Linear)]

    def _layer_of(self, name: str) -> Module:
        return self.layers[int(name.split(".")[1])]

    def set_quant_bits(self, bits: int | None):
        for layer in self.layers:
            if isinstance(layer, (Linear, Maxout)):
                layer.quant_bits = bits or None

    def logits(self, x: np.ndarray, batch_size: int = 4096) -> np.ndarray:
        out = [self.forward(Tensor(x[i:i + batch_size])).data for i in range(0, len(x), batch_size)]
        return np.concatenate(out, axis=0)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(x), axis=1)

    def activation_pattern(self, x: np.ndarray) -> np.ndarray:
        """Concatenated piece indices of every activation unit, one row per input."""
        h = Tensor(np.asarray(x, dtype=np.float64))
        parts = []
        for layer in self.layers:
            if hasattr(layer, "pattern"):
                parts.append(np.asarray(layer.pattern(h.data)).reshape(len(h.data), -1))
            h = layer(h)
        if not parts:
            return np.zeros((len(h.data), 0), dtype=np.int64)
        return np.concatenate(parts, axis=1)


def param_digest(tensors) -> str:
    """SHA-256 over the names, shapes and raw bytes of ``(name, tensor)`` pairs."""
    h = hashlib.sha256()
    for name, t in tensors:
        arr = t.data if isinstance(t, Tensor) else np.asarray(t)
        h.update(name.encode())
        h.update(repr(arr.shape).encode())
        h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return h.hexdigest()


def model_digest(model: MLP) -> str:
    return param_digest(list(model.named_parameters()) + list(model.named_buffers()))


def save_model(model: MLP, path, metrics: dict | None = None):
    entries = [(n, "param", t.data) for n, t in model.named_parameters()]
    entries += [(n, "buffer", np.asarray(b, dtype=np.float64)) for n, b in model.named_buffers()]
    header = {
        "arch": model.arch.to_dict(),
        "tensors": [{"name": n, "shape": list(a.shape), "kind": kind} for n, kind, a in entries],
        "metrics": metrics or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for _, _, a in entries:
            f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    os.replace(tmp, path)


def load_model(path) -> tuple[MLP, dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise FormatError("bad model file magic", 0)
    if len(raw) < 16:
        raise FormatError("truncated header length", 8)
    (n,) = struct.unpack("<Q", raw[8:16])
    if len(raw) < 16 + n:
        raise FormatError("truncated header", 16)
    header = json.loads(raw[16:16 + n].decode())
    model = MLP(ArchSpec.from_dict(header["arch"]))
    params = dict(model.named_parameters())
    offset = 16 + n
    for entry in header["tensors"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        end = offset + 8 * count
        if end > len(raw):
            raise FormatError(f"truncated tensor {entry['name']}", offset)
        arr = np.frombuffer(raw[offset:end], dtype="<f8").astype(np.float64).reshape(entry["shape"])
        if entry["kind"] == "param":
            params[entry["name"]].data = arr.copy()
        else:
            model.set_buffer(entry["name"], arr.copy())
        offset = end
    if offset != len(raw):
        raise FormatError("trailing bytes after last tensor", offset)
    return model, header.get("metrics", {})
