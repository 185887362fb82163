"""Seeded teacher/student experiments and their CSV + JSON reports."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .costmodel import measure_workspace, param_count
from .data import Dataset
from .distill import TrainedModel, train_student, train_teacher
from .errors import ConfigurationError, TrainingFailure
from .model import MLP, model_digest, param_digest

log = logging.getLogger(__name__)

CSV_COLUMNS = ("arm", "activation", "segments", "quant_bits", "seed", "status", "test_accuracy",
               "test_accuracy_std", "final_loss", "teacher_accuracy", "params_added",
               "workspace_elems", "init_digest", "teacher_digest")
AGGREGATE = "aggregate"


@dataclass
class ExperimentReport:
    rows: list[dict] = field(default_factory=list)
    aggregates: dict[str, dict] = field(default_factory=dict)
    teachers: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def arm_accuracies(self, arm: str) -> list[float]:
        return [r["test_accuracy"] for r in self.rows if r["arm"] == arm and r["status"] == "ok"]

    def mean_accuracy(self, arm: str) -> float:
        return self.aggregates[arm]["mean"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(CSV_COLUMNS), lineterminator="\n")
        writer.writeheader()
        for arm in dict.fromkeys(r["arm"] for r in self.rows):
            arm_rows = [r for r in self.rows if r["arm"] == arm]
            for r in arm_rows:
                writer.writerow({c: _fmt(r.get(c, "")) for c in CSV_COLUMNS})
            agg = self.aggregates[arm]
            first = arm_rows[0]
            writer.writerow({c: _fmt(v) for c, v in {
                "arm": arm, "activation": first["activation"], "segments": first["segments"],
                "quant_bits": first["quant_bits"], "seed": AGGREGATE, "status": f"{agg['n']}/{agg['n'] + agg['failed']}",
                "test_accuracy": agg["mean"], "test_accuracy_std": agg["std"], "final_loss": agg["final_loss_mean"],
                "teacher_accuracy": "", "params_added": first["params_added"],
                "workspace_elems": first["workspace_elems"], "init_digest": "", "teacher_digest": "",
            }.items()})
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {"config": self.config, "teachers": self.teachers, "aggregates": self.aggregates,
               "rows": self.rows, "warnings": self.warnings}
        return json.dumps(_jsonable(doc), indent=2, sort_keys=True)

    def write(self, out_dir, stem: str = "results"):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        atomic_write(out / f"{stem}.csv", self.to_csv())
        atomic_write(out / f"{stem}.json", self.to_json())


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return v


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, float) and math.isnan(x):
        return None
    if isinstance(x, np.generic):
        return x.item()
    return x


def atomic_write(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def aggregate(rows: list[dict]) -> dict:
    """Mean and sample standard deviation (n - 1) over the completed seeds."""
    ok = [r for r in rows if r["status"] == "ok"]
    acc = np.array([r["test_accuracy"] for r in ok], dtype=np.float64)
    loss = np.array([r["final_loss"] for r in ok], dtype=np.float64)
    n = len(ok)
    return {
        "n": n,
        "failed": len(rows) - n,
        "mean": float(acc.mean()) if n else float("nan"),
        "std": float(acc.std(ddof=1)) if n > 1 else float("nan"),
        "final_loss_mean": float(loss.mean()) if n else float("nan"),
    }


def _student_row(arm, arch, seed, quant_bits, teacher, teacher_hash, cost) -> dict:
    return {"arm": arm, "activation": arch.activation, "segments": arch.segments,
            "quant_bits": quant_bits, "seed": seed, "teacher_accuracy": teacher.test_accuracy,
            "teacher_digest": teacher_hash, "init_digest": param_digest(MLP(arch, seed).dense_parameters()),
            "params_added": cost["params_added"], "workspace_elems": cost["workspace_elems"]}


def student_cost(arch) -> dict:
    sample = np.zeros(arch.input_dim)
    ws = measure_workspace(MLP(arch), sample)
    return {"params_added": param_count(arch).params_added, "workspace_elems": ws.workspace_total}


def run_experiment(cfg: ExperimentConfig, data: Dataset | None = None, arms=None,
                   teachers: dict[int, TrainedModel] | None = None) -> ExperimentReport:
    """Train one teacher per seed, then every student arm against it.

    ``arms`` is a list of ``(name, activation, segments)``; by default one arm
    per configured activation at the configured segment count. ``teachers``
    caches trained teachers across calls (keyed by seed).
    """
    data = cfg.dataset() if data is None else data
    teachers = {} if teachers is None else teachers
    if arms is None:
        arms = [(kind, kind, cfg.segments) for kind in cfg.activations]
    report = ExperimentReport(config=cfg.to_dict())
    qcfg = cfg.quant_config()
    tarch = cfg.teacher_arch(data)
    archs = {name: cfg.student_arch(data, kind, k) for name, kind, k in arms}
    costs = {name: student_cost(a) for name, a in archs.items()}
    for seed in cfg.seeds:
        if seed not in teachers:
            try:
                teachers[seed] = train_teacher(tarch, data, cfg.train, seed)
            except TrainingFailure as exc:
                msg = f"teacher seed {seed} failed: {exc}"
                log.warning(msg)
                report.warnings.append(msg)
                for name, arch in archs.items():
                    report.rows.append({"arm": name, "activation": arch.activation, "segments": arch.segments,
                                        "quant_bits": cfg.quant_bits, "seed": seed, "status": "failed",
                                        "test_accuracy": float("nan"), "final_loss": float("nan"),
                                        **costs[name]})
                continue
        teacher = teachers[seed]
        thash = model_digest(teacher.model)
        report.teachers.append({"seed": seed, "test_accuracy": teacher.test_accuracy, "digest": thash})
        for name, arch in archs.items():
            row = _student_row(name, arch, seed, cfg.quant_bits, teacher, thash, costs[name])
            try:
                trained = train_student(arch, teacher, data, cfg.distill_config(seed), qcfg)
                row.update(status="ok", test_accuracy=trained.test_accuracy, final_loss=trained.final_loss,
                           wall_time=trained.wall_time)
            except TrainingFailure as exc:
                msg = f"arm {name} seed {seed} failed: {exc}"
                log.warning(msg)
                report.warnings.append(msg)
                row.update(status="failed", test_accuracy=float("nan"), final_loss=float("nan"))
            if model_digest(teacher.model) != thash:
                raise RuntimeError("teacher parameters changed during student training")
            report.rows.append(row)
    for name in archs:
        report.aggregates[name] = aggregate([r for r in report.rows if r["arm"] == name])
        if report.aggregates[name]["failed"]:
            report.warnings.append(f"arm {name}: aggregate over {report.aggregates[name]['n']} completed seeds")
    return report


def sweep_segments(cfg: ExperimentConfig, k_values, activations=("lma",), data: Dataset | None = None,
                   teachers: dict | None = None) -> ExperimentReport:
    """One arm per (activation, k); the teacher of each seed is shared by all of them."""
    for kind in activations:
        if kind not in ("lma", "aplu"):
            raise ConfigurationError(f"segment sweeps need lma or aplu, got {kind!r}")
    for kind in activations:
        for k in k_values:
            if kind == "lma" and k % 2:
                raise ConfigurationError(f"LMA needs an even segment count, got {k}")
    arms = [(f"{kind}-{k}", kind, k) for kind in activations for k in k_values]
    return run_experiment(cfg, data, arms, teachers)


def summarize_csv(text: str) -> dict[str, dict]:
    """Recompute per-arm aggregates from the per-seed rows of a results CSV."""
    rows = []
    for r in csv.DictReader(io.StringIO(text)):
        if r["seed"] == AGGREGATE:
            continue
        acc = float(r["test_accuracy"]) if r["test_accuracy"] else float("nan")
        loss = float(r["final_loss"]) if r["final_loss"] else float("nan")
        rows.append({"arm": r["arm"], "status": r["status"], "test_accuracy": acc, "final_loss": loss})
    return {arm: aggregate([r for r in rows if r["arm"] == arm]) for arm in dict.fromkeys(r["arm"] for r in rows)}
