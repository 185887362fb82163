"""Experiment configuration: one JSON document, every key optional, unknown keys rejected.

Top-level keys (defaults in parentheses):

    task          "two-spirals" | "grid-classes" | "idx"   ("two-spirals")
    n_samples     synthetic sample count                     (1000)
    noise         synthetic coordinate noise                 (0.05)
    classes       class count for grid-classes               (null -> 4)
    data_seed     seed of the data draw and split            (0)
    idx_images    IDX image file when task == "idx"          (null)
    idx_labels    IDX label file when task == "idx"          (null)
    teacher       architecture overrides for the teacher     ({"hidden": [64, 64]})
    student       architecture overrides for the student     ({"hidden": [8]})
    activations   student activation arms                    (["relu", "prelu", "swish", "aplu", "lma"])
    segments      segment count for multi-segment arms       (8)
    distill       {"alpha": 0.7, "tau": 2.0, "tau_squared": true}
    train         TrainConfig fields; val_fraction 0.1 is the held-out share of train
    quant_bits    student weight bits, 0 disables            (0)
    seeds         list of run seeds                          ([1, 2, 3, 4, 5])
    out_dir       report directory                           ("runs")
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .activations import KINDS
from .data import TASKS, Dataset, gen_synthetic, idx_dataset
from .distill import DistillConfig, TrainConfig
from .errors import ConfigurationError
from .model import ArchSpec
from .quant import QuantConfig


@dataclass(frozen=True)
class DistillSettings:
    alpha: float = 0.7
    tau: float = 2.0
    tau_squared: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    task: str = "two-spirals"
    n_samples: int = 1000
    noise: float = 0.05
    classes: int | None = None
    data_seed: int = 0
    idx_images: str | None = None
    idx_labels: str | None = None
    teacher: dict = field(default_factory=lambda: {"hidden": [64, 64]})
    student: dict = field(default_factory=lambda: {"hidden": [8]})
    activations: tuple[str, ...] = ("relu", "prelu", "swish", "aplu", "lma")
    segments: int = 8
    distill: DistillSettings = field(default_factory=DistillSettings)
    train: TrainConfig = field(default_factory=TrainConfig)
    quant_bits: int = 0
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    out_dir: str = "runs"

    def __post_init__(self):
        object.__setattr__(self, "activations", tuple(self.activations))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.task not in TASKS + ("idx",):
            raise ConfigurationError(f"unknown task {self.task!r}")
        if self.task == "idx" and not (self.idx_images and self.idx_labels):
            raise ConfigurationError("task 'idx' needs idx_images and idx_labels")
        for kind in self.activations:
            if kind not in KINDS:
                raise ConfigurationError(f"unknown activation {kind!r}; expected one of {', '.join(KINDS)}")
        if self.quant_bits:
            QuantConfig(self.quant_bits)
        if not self.seeds:
            raise ConfigurationError("at least one seed is required")
        for role in ("teacher", "student"):
            unknown = set(getattr(self, role)) - set(ArchSpec.__dataclass_fields__) - {"input_dim", "output_dim"}
            if unknown:
                raise ConfigurationError(f"unknown {role} architecture keys: {sorted(unknown)}")

    # -- derived objects --------------------------------------------------

    def dataset(self) -> Dataset:
        if self.task == "idx":
            return idx_dataset(self.idx_images, self.idx_labels, self.data_seed)
        return gen_synthetic(self.task, self.n_samples, self.noise, self.data_seed, self.classes)

    def _arch(self, overrides: dict, data: Dataset, **extra) -> ArchSpec:
        d = {"input_dim": data.input_dim, "output_dim": data.classes}
        d.update(overrides)
        d.update(extra)
        return ArchSpec.from_dict(d)

    def teacher_arch(self, data: Dataset) -> ArchSpec:
        return self._arch(self.teacher, data)

    def student_arch(self, data: Dataset, activation: str, segments: int | None = None) -> ArchSpec:
        return self._arch(self.student, data, activation=activation,
                          segments=self.segments if segments is None else segments)

    def distill_config(self, seed: int) -> DistillConfig:
        return DistillConfig(self.distill.alpha, self.distill.tau, self.distill.tau_squared, self.train, seed)

    def quant_config(self) -> QuantConfig | None:
        return QuantConfig(self.quant_bits) if self.quant_bits else None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["activations"] = list(self.activations)
        d["seeds"] = list(self.seeds)
        return d

    def override(self, **changes) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


def _strict(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigurationError(f"{where} must be a JSON object")
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigurationError(f"unknown keys in {where}: {sorted(unknown)}")
    return cls(**data)


def parse_config(doc: dict) -> ExperimentConfig:
    doc = dict(doc)
    if "distill" in doc:
        doc["distill"] = _strict(DistillSettings, doc["distill"], "distill")
    if "train" in doc:
        doc["train"] = _strict(TrainConfig, doc["train"], "train")
    return _strict(ExperimentConfig, doc, "config")


def load_config(path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(doc)
