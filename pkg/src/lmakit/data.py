"""Desk-scale datasets: synthetic 2-D tasks and IDX (MNIST-style) files."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, FormatError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
TASKS = ("two-spirals", "grid-classes")


@dataclass
class Dataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    classes: int
    name: str = ""

    @property
    def input_dim(self) -> int:
        return self.x_train.shape[1]

    def n_fit(self, val_fraction: float) -> int:
        """Rows used for gradient steps; the tail of the train split is held out."""
        n = len(self.y_train)
        return n - int(round(val_fraction * n))


def split(x: np.ndarray, y: np.ndarray, classes: int, rng: np.random.Generator,
          name: str = "", train_fraction: float = 0.8) -> Dataset:
    perm = rng.permutation(len(y))
    cut = int(round(train_fraction * len(y)))
    tr, te = perm[:cut], perm[cut:]
    return Dataset(x[tr], y[tr], x[te], y[te], classes, name)


def two_spirals(n_samples: int, noise: float, rng: np.random.Generator, turns: float = 1.75):
    """Two interleaved Archimedean spirals in roughly [-1, 1]^2."""
    per = [n_samples // 2, n_samples - n_samples // 2]
    xs, ys = [], []
    for label, count in enumerate(per):
        t = np.sqrt(rng.random(count))
        theta = t * turns * 2 * np.pi + label * np.pi
        r = 0.1 + 0.9 * t
        pts = np.c_[r * np.cos(theta), r * np.sin(theta)]
        xs.append(pts + noise * rng.standard_normal(pts.shape))
        ys.append(np.full(count, label))
    return np.concatenate(xs), np.concatenate(ys).astype(np.int64)


def grid_label(ix: np.ndarray, iy: np.ndarray, classes: int) -> np.ndarray:
    if classes == 4:
        return 2 * (ix % 2) + (iy % 2)
    return (ix + iy) % classes


def grid_classes(n_samples: int, noise: float, rng: np.random.Generator, classes: int = 4, cells: int = 4):
    """Checkerboard over ``cells x cells`` squares of [-1, 1]^2."""
    clean = rng.uniform(-1.0, 1.0, (n_samples, 2))
    idx = np.minimum(((clean + 1.0) / 2.0 * cells).astype(np.int64), cells - 1)
    y = grid_label(idx[:, 0], idx[:, 1], classes)
    return clean + noise * rng.standard_normal(clean.shape), y.astype(np.int64)


def gen_synthetic(task: str, n_samples: int = 1000, noise: float = 0.0, seed: int = 0,
                  classes: int | None = None) -> Dataset:
    if task == "two-spirals":
        classes = 2 if classes is None else classes
        if classes != 2:
            raise ConfigurationError("two-spirals always has 2 classes")
    elif task == "grid-classes":
        classes = 4 if classes is None else classes
        if classes < 2:
            raise ConfigurationError(f"grid-classes needs >= 2 classes, got {classes}")
    else:
        raise ConfigurationError(f"unknown task {task!r}; expected one of {TASKS}")
    if n_samples < 10 * classes:
        raise ConfigurationError(f"need at least {10 * classes} samples for {classes} classes, got {n_samples}")
    rng = np.random.default_rng(seed)
    if task == "two-spirals":
        x, y = two_spirals(n_samples, noise, rng)
    else:
        x, y = grid_classes(n_samples, noise, rng, classes)
    return split(x, y, classes, rng, task)


# ---------------------------------------------------------------------------
# IDX container: big-endian header, unsigned bytes


def read_idx(path, expected_magic: int) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise FormatError("file shorter than the 4-byte magic", len(raw))
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise FormatError(f"magic 0x{magic:08x}, expected 0x{expected_magic:08x}", 0)
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError("truncated dimension header", len(raw))
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    size = int(np.prod(dims, dtype=np.int64))
    if len(raw) != header + size:
        raise FormatError(f"payload has {len(raw) - header} bytes, header promises {size}",
                          min(len(raw), header + size))
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def write_idx(path, array: np.ndarray):
    array = np.asarray(array, dtype=np.uint8)
    magic = 0x00000800 | array.ndim
    with open(path, "wb") as f:
        f.write(struct.pack(">I", magic))
        f.write(struct.pack(f">{array.ndim}I", *array.shape))
        f.write(array.tobytes())


def load_idx(images_path, labels_path=None):
    """Images flattened to float vectors in [0, 1] and, if given, their labels."""
    images = read_idx(images_path, IMAGE_MAGIC)
    x = images.reshape(len(images), -1).astype(np.float64) / 255.0
    if labels_path is None:
        return x
    y = read_idx(labels_path, LABEL_MAGIC).astype(np.int64)
    if len(y) != len(x):
        raise FormatError(f"{len(x)} images but {len(y)} labels", 4)
    return x, y


def idx_dataset(images_path, labels_path, seed: int = 0) -> Dataset:
    x, y = load_idx(images_path, labels_path)
    classes = int(y.max()) + 1
    return split(x, y, classes, np.random.default_rng(seed), Path(images_path).name)
