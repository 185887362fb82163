"""Teacher training and student training under the weighted distillation loss."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

from .data import Dataset
from .engine import Tensor, accumulate, make_op, scale, softmax_cross_entropy, softmax_np, log_softmax_np
from .errors import ConfigurationError, DimensionError, TrainingFailure
from .model import MLP, STREAM_SHUFFLE, ArchSpec, stream
from .optim import PlateauDecay, make_optimizer
from .quant import QuantConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    optimizer: str = "sgd"
    lr: float = 0.05
    momentum: float = 0.9
    beta2: float = 0.998
    weight_decay: float = 2.2e-4
    decay_factor: float = 0.5
    patience: int = 10
    cooldown: int = 8
    max_decays: int = 11
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ConfigurationError(f"invalid training schedule: {self}")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigurationError(f"val_fraction must be in [0, 1), got {self.val_fraction}")


@dataclass(frozen=True)
class DistillConfig:
    alpha: float = 0.7
    tau: float = 2.0
    tau_squared: bool = True
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigurationError(f"distillation weight must be in [0, 1], got {self.alpha}")
        if self.tau <= 0:
            raise ConfigurationError(f"temperature must be positive, got {self.tau}")


@dataclass
class TrainedModel:
    model: MLP
    arch: ArchSpec
    seed: int
    test_accuracy: float
    final_loss: float
    history: list[dict] = field(default_factory=list)
    wall_time: float = 0.0

    def metrics(self) -> dict:
        return {"test_accuracy": self.test_accuracy, "final_loss": self.final_loss, "seed": self.seed}


# ---------------------------------------------------------------------------
# losses


def soften_logits(logits: Tensor, tau: float) -> Tensor:
    if tau <= 0:
        raise ConfigurationError(f"temperature must be positive, got {tau}")
    return logits if tau == 1 else scale(logits, 1.0 / tau)


def kl_divergence(student_logits: Tensor, teacher_logits, tau: float = 1.0) -> Tensor:
    """Batch-mean KL(softmax(teacher/tau) || softmax(student/tau)).

    The teacher side is a constant; only the student receives a gradient.
    """
    t = np.asarray(teacher_logits.data if isinstance(teacher_logits, Tensor) else teacher_logits,
                   dtype=np.float64)
    if t.shape != student_logits.shape:
        raise DimensionError(f"teacher logits {t.shape} vs student logits {student_logits.shape}")
    if tau <= 0:
        raise ConfigurationError(f"temperature must be positive, got {tau}")
    batch = t.shape[0]
    p = softmax_np(t / tau)
    logq = log_softmax_np(student_logits.data / tau)
    value = (xlogy(p, p) - p * logq).sum() / batch

    def _bw(g):
        accumulate(student_logits, (np.exp(logq) - p) * (float(g) / (tau * batch)))

    return make_op(np.asarray(value), (student_logits,), _bw, "kl_div")


def distill_loss(student_logits: Tensor, teacher_logits, labels, cfg: DistillConfig) -> Tensor:
    """(1 - alpha) * CE(student, labels) + alpha * [tau^2] * KL(teacher || student) at tau."""
    ce = softmax_cross_entropy(student_logits, labels)
    kl = kl_divergence(student_logits, teacher_logits, cfg.tau)
    if cfg.tau_squared:
        kl = scale(kl, cfg.tau * cfg.tau)
    return scale(ce, 1.0 - cfg.alpha) + scale(kl, cfg.alpha)


# ---------------------------------------------------------------------------
# training loop


def accuracy(model: MLP, x: np.ndarray, y: np.ndarray) -> float:
    model.eval()
    return float(np.mean(model.predict(x) == y))


def fit(model: MLP, data: Dataset, cfg: TrainConfig, seed: int, loss_fn) -> TrainedModel:
    """Minibatch training with plateau learning-rate decay on held-out loss.

    ``loss_fn(logits, idx)`` builds the loss for the training rows ``idx``.
    Raises TrainingFailure when the loss or parameters stop being finite.
    """
    start = time.perf_counter()
    n_fit = data.n_fit(cfg.val_fraction)
    x_fit = data.x_train[:n_fit]
    x_val, y_val = data.x_train[n_fit:], data.y_train[n_fit:]
    val_idx = np.arange(n_fit, len(data.y_train))
    shuffle = stream(seed, STREAM_SHUFFLE)
    params = model.parameters()
    opt = make_optimizer(cfg.optimizer, params, cfg.lr, cfg.momentum, cfg.beta2, cfg.weight_decay)
    sched = PlateauDecay(cfg.decay_factor, cfg.patience, cfg.cooldown, cfg.max_decays)
    history = []
    loss_value = float("nan")
    for epoch in range(cfg.epochs):
        model.train()
        order = shuffle.permutation(n_fit)
        total, seen = 0.0, 0
        for i in range(0, n_fit, cfg.batch_size):
            idx = order[i:i + cfg.batch_size]
            loss = loss_fn(model(Tensor(x_fit[idx])), idx)
            loss_value = loss.item()
            if not np.isfinite(loss_value):
                raise TrainingFailure(f"non-finite loss at epoch {epoch}, seed {seed}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss_value * len(idx)
            seen += len(idx)
        if not all(np.all(np.isfinite(p.data)) for p in params):
            raise TrainingFailure(f"non-finite parameters after epoch {epoch}, seed {seed}")
        val_acc = accuracy(model, x_val, y_val) if len(y_val) else 0.0
        # the training objective on held-out rows: a continuous signal, unlike accuracy on a few dozen points
        val_loss = loss_fn(model(Tensor(data.x_train[n_fit:])), val_idx).item() if len(y_val) else loss_value
        sched.update(opt, -val_loss)
        history.append({"epoch": epoch, "train_loss": total / max(seen, 1), "val_loss": val_loss,
                        "val_accuracy": val_acc,
                        "test_accuracy": accuracy(model, data.x_test, data.y_test), "lr": opt.lr})
    model.eval()
    test_acc = accuracy(model, data.x_test, data.y_test)
    final = history[-1]["train_loss"] if history else loss_value
    return TrainedModel(model, model.arch, seed, test_acc, final, history, time.perf_counter() - start)


def train_supervised(arch: ArchSpec, data: Dataset, cfg: TrainConfig, seed: int) -> TrainedModel:
    model = MLP(arch, seed)
    y_fit = data.y_train

    def loss_fn(logits, idx):
        return softmax_cross_entropy(logits, y_fit[idx])

    return fit(model, data, cfg, seed, loss_fn)


def train_teacher(arch: ArchSpec, data: Dataset, cfg: TrainConfig, seed: int) -> TrainedModel:
    trained = train_supervised(arch, data, cfg, seed)
    log.info("teacher seed=%d accuracy=%.4f", seed, trained.test_accuracy)
    return trained


def teacher_logits(teacher: TrainedModel, x: np.ndarray) -> np.ndarray:
    teacher.model.eval()
    return teacher.model.logits(x)


def train_student(arch: ArchSpec, teacher: TrainedModel, data: Dataset, cfg: DistillConfig,
                  qcfg: QuantConfig | None = None) -> TrainedModel:
    """Train ``arch`` against ground truth and the frozen teacher's logits.

    With ``qcfg`` every forward pass uses quantized weights while updates land
    on the full-precision copies; the reported accuracy is at that bit width.
    """
    model = MLP(arch, cfg.seed)
    if qcfg is not None:
        model.set_quant_bits(qcfg.bits)
    soft = teacher_logits(teacher, data.x_train)
    y = data.y_train

    def loss_fn(logits, idx):
        return distill_loss(logits, soft[idx], y[idx], cfg)

    trained = fit(model, data, cfg.train, cfg.seed, loss_fn)
    log.info("student %s seed=%d accuracy=%.4f", arch.activation, cfg.seed, trained.test_accuracy)
    return trained


def quantized_distill_train(arch: ArchSpec, teacher: TrainedModel, data: Dataset,
                            dcfg: DistillConfig, qcfg: QuantConfig) -> TrainedModel:
    return train_student(arch, teacher, data, dcfg, qcfg)
